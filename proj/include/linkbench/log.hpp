#pragma once

#include <fmt/core.h>

#include <cstdio>
#include <utility>

namespace linkbench::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

Level level();
void set_level(Level l);

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::info) fmt::print(stderr, "[linkbench] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (level() >= Level::debug) fmt::print(stderr, "[linkbench:debug] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(stderr, "[linkbench] warning: {}\n", fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace linkbench::log
