// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor container, PNG codec and run configuration.

#include <random>

#include "doctest.h"
#include "semedit/config.hpp"
#include "semedit/image_io.hpp"
#include "semedit/tensor_io.hpp"

using namespace semedit;

TEST_CASE("tensor container: round trip, layout and errors") {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n;
  Matrix<float> m(3, 5);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  TensorContainer c;
  c.put_matrix("layer.weight", m);
  c.put("scalar", Tensor{{1}, {2.5f}});
  const TensorContainer back = TensorContainer::deserialize(c.serialize());
  CHECK(back.names() == std::vector<std::string>{"layer.weight", "scalar"});
  CHECK(back.get_matrix<float>("layer.weight") == m);
  CHECK(back.get("scalar").data == std::vector<float>{2.5f});
  CHECK(back.serialize() == c.serialize());
  // Row-major payload.
  CHECK(back.get("layer.weight").data[1] == m(0, 1));

  CHECK_THROWS_AS(back.get("missing"), IoError);
  CHECK_THROWS_AS(back.get_matrix<float>("scalar"), IoError);
  CHECK_THROWS_AS(c.put("bad", Tensor{{2, 2}, {1.0f}}), ArgumentError);
  auto bytes = c.serialize();
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(TensorContainer::deserialize(bytes), IoError);
  CHECK_THROWS_AS(TensorContainer::deserialize({'n', 'o', 'p', 'e'}), IoError);

  const auto path = std::filesystem::temp_directory_path() / "semedit_test.tensors";
  c.save(path);
  CHECK(TensorContainer::load(path).get_matrix<float>("layer.weight") == m);
  std::filesystem::remove(path);
}

TEST_CASE("tensor container: little-endian float32 header and payload") {
  TensorContainer c;
  c.put("a", Tensor{{1}, {1.0f}});
  const auto bytes = c.serialize();
  // 1.0f = 0x3f800000 in the last four bytes, least significant first.
  REQUIRE(bytes.size() >= 4);
  const std::vector<std::uint8_t> tail(bytes.end() - 4, bytes.end());
  CHECK(tail == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f});
}

TEST_CASE("png: quantized round trip and errors") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1.2f, 1.2f);
  const ImageShape shape{4, 6, 3};
  Vector<float> img(shape.size());
  for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = u(rng);
  const Vector<float> q = quantize_u8(img);
  CHECK(q.minCoeff() >= -1.0f);
  CHECK(q.maxCoeff() <= 1.0f);
  CHECK(quantize_u8(q) == q);
  CHECK(decode_png(encode_png(img, shape), shape) == q);
  CHECK(decode_png(encode_png(q, shape), shape) == q);
  CHECK(encode_png(q, shape) == encode_png(q, shape));
  CHECK_THROWS_AS(decode_png(encode_png(img, shape), ImageShape{6, 4, 3}), IoError);
  CHECK_THROWS_AS(decode_png({1, 2, 3}, shape), IoError);
  CHECK_THROWS_AS(encode_png(Vector<float>::Zero(5), shape), ArgumentError);

  const auto path = std::filesystem::temp_directory_path() / "semedit_test.png";
  write_png(path, img, shape);
  CHECK(read_png(path, shape) == q);
  std::filesystem::remove(path);
}

TEST_CASE("config: defaults round trip through JSON") {
  const RunConfig d = default_run_config();
  const auto j = to_json(d);
  const RunConfig back = overlay_run_config(default_run_config(), nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(d.eval.steps == std::vector<int>{4, 8, 12, 16, 20});
  CHECK(d.eval.faces == 200);
  CHECK(d.mapper.objective.weights.pre == 0.2);
  CHECK(d.mapper.objective.weights.id == 0.5);
  CHECK(d.mapper.objective.weights.dir == 2.0);
  CHECK(d.mapper.t_sample == 8);
}

TEST_CASE("config: overlays replace only the given fields") {
  const RunConfig c = overlay_run_config(default_run_config(), nlohmann::json::parse(R"({
    "dae_training": {"iterations": 50},
    "mapper": {"objective": {"sms": "off", "weights": {"id": 0.0}}}
  })"));
  CHECK(c.dae_training.iterations == 50);
  CHECK(c.dae_training.batch == default_run_config().dae_training.batch);
  CHECK(c.mapper.objective.sms == SmsMode::off);
  CHECK(c.mapper.objective.weights.id == 0.0);
  CHECK(c.mapper.objective.weights.dir == 2.0);
}

TEST_CASE("config: unknown keys, wrong types and ranges are rejected") {
  auto fails_with = [](const char* text, const std::string& needle) {
    try {
      overlay_run_config(default_run_config(), nlohmann::json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with(R"({"dae": {"d_zz": 3}})", "dae.d_zz"));
  CHECK(fails_with(R"({"mapper": {"objective": {"weights": {"style": 1}}}})", "mapper.objective.weights.style"));
  CHECK(fails_with(R"({"extra": 1})", "extra"));
  CHECK(fails_with(R"({"data": {"n": "many"}})", "data.n"));
  CHECK(fails_with(R"({"data": 4})", "data"));
  CHECK(fails_with(R"({"mapper": {"objective": {"sms": "sideways"}}})", "sms"));
  CHECK(fails_with(R"({"eval": {"steps": [4, 200]}})", "eval.steps"));
  CHECK(fails_with(R"({"mapper": {"objective": {"weights": {"pre": 0, "id": 0, "dir": 0}}}})", "weight"));
  CHECK(fails_with(R"({"dae_training": {"max_snr_weight": 0.5}})", "max_snr_weight"));

  const auto path = std::filesystem::temp_directory_path() / "semedit_test_config.json";
  write_file(path, std::string("{not json"));
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
}
