#pragma once

#include "kgaudit/errors.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace kgaudit::detail {

// Calls `fn(line_number, fields)` for each non-blank line of `path`, split on
// `delim`. Bytes are passed through untouched (Latin-1 safe); a trailing CR is
// dropped.
inline void for_each_record(const std::filesystem::path& path, std::string_view delim,
                            const std::function<void(std::size_t, const std::vector<std::string_view>&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::string line;
  std::vector<std::string_view> fields;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fields.clear();
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(delim);
      if (pos == std::string_view::npos) {
        fields.push_back(rest);
        break;
      }
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + delim.size());
    }
    fn(number, fields);
  }
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_int(std::string_view s, long long& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace kgaudit::detail
