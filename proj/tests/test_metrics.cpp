// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "json.hpp"
#include "semedit/metrics.hpp"

using namespace semedit;

TEST_CASE("monotone_fraction") {
  Matrix<double> r(3, 4);
  r << 0.1, 0.5, 0.3, 0.2,  //
      0.2, 0.4, 0.3, 0.25,  //
      0.3, 0.3, 0.29, 0.3;
  CHECK(monotone_fraction(r, 1.0) == doctest::Approx(0.5));
  CHECK(monotone_fraction(r, -1.0) == doctest::Approx(0.5));
  CHECK(monotone_fraction(r, 1.0, 0.011) == doctest::Approx(0.75));
}

TEST_CASE("evaluation_faces: headroom in the edit direction and determinism") {
  const auto up = evaluation_faces(50, Attribute::smile, 1.0, 5);
  const auto down = evaluation_faces(50, Attribute::age, -1.0, 5, 0.4);
  REQUIRE(up.size() == 50);
  for (const auto& p : up) CHECK(p[Attribute::smile] <= 0.7 + 1e-12);
  for (const auto& p : down) CHECK(p[Attribute::age] >= 0.4 - 1e-12);
  CHECK(evaluation_faces(50, Attribute::smile, 1.0, 5) == up);
  const Matrix<float> q = render_quantized(up);
  CHECK(q.cols() == 50);
  CHECK(q.col(0) == quantize_u8(render(up[0])));
}

TEST_CASE("mapper_axis follows the prompt") {
  AttributeMapper m;
  const TextLexicon lex;
  m.meta.y_tar = "young";
  CHECK(mapper_axis(m, lex) == std::make_pair(Attribute::age, -1.0));
  m.meta.y_tar = "curly hair";
  CHECK(mapper_axis(m, lex) == std::make_pair(Attribute::hair_curl, 1.0));
  m.meta.y_tar = "moustache";
  CHECK_THROWS_AS(mapper_axis(m, lex), LookupError);
}

TEST_CASE("report formats") {
  MetricReport r;
  r.attribute = "smile";
  r.target = 0;
  r.faces = 3;
  r.target_deltas = {0.1, 0.2, 0.3};
  const std::string line = report_jsonl(r);
  REQUIRE(!line.empty());
  CHECK(line.back() == '\n');
  CHECK(line.find('\n') == line.size() - 1);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("attribute") == "smile");
  CHECK(j.at("faces") == 3);
  CHECK(series_tsv("t", "err", {{4, 0.5}, {8, 0.25}}) == "t\terr\n4\t0.5\n8\t0.25\n");
}
