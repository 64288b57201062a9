#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "capint/errors.hpp"

namespace capint::numfmt {

// Shortest round-trip decimal form; keeps CSV output byte-stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) throw validation_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

}  // namespace capint::numfmt
