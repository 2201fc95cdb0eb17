// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace semedit::log {

namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;
Sink g_sink;

const char* tag(Level l) {
  switch (l) {
    case Level::debug:
      return "debug";
    case Level::info:
      return "info";
    case Level::warning:
      return "warning";
    case Level::error:
      return "error";
    case Level::off:
      break;
  }
  return "";
}

}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void write(Level l, const std::string& message) {
  if (l < g_level.load() || l == Level::off) return;
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(l, message);
  } else {
    std::cerr << "[" << tag(l) << "] " << message << '\n';
  }
}

}  // namespace semedit::log
