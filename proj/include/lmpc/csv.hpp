/*
 Copyright 2026 The lmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

/**
 * @file csv.hpp
 * @brief Locale-independent CSV output with round-trip precision.
 */
#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmpc {

/// 17 significant digits, independent of the global locale. Non-finite
/// values print as nan, inf and -inf.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

/// Row-oriented CSV writer. Fields are written as given; text fields must not
/// contain commas or quotes.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    columns_ = header.size();
    for (const auto& h : header) field(h);
    end_row();
  }

  CsvWriter& field(const std::string& s) {
    if (n_ > 0) out_ << ',';
    out_ << s;
    ++n_;
    return *this;
  }
  CsvWriter& field(double v) { return field(format_double(v)); }
  CsvWriter& field(int v) { return field(std::to_string(v)); }
  CsvWriter& field(long v) { return field(std::to_string(v)); }
  CsvWriter& field(unsigned long v) { return field(std::to_string(v)); }
  CsvWriter& field(unsigned long long v) { return field(std::to_string(v)); }
  CsvWriter& field(long long v) { return field(std::to_string(v)); }
  CsvWriter& empty() { return field(std::string()); }

  void end_row() {
    if (n_ != columns_) throw std::logic_error("csv row has " + std::to_string(n_) + " fields, header has " + std::to_string(columns_));
    out_ << '\n';
    n_ = 0;
  }

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t n_ = 0;
};

}  // namespace lmpc
