#include "prefconflict/text.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>

namespace prefconflict {

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

std::string format_real6(double v) {
  if (v == 0.0) v = 0.0;  // never emit "-0": JSON parsers read it back as +0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

double quantize_real6(double v) {
  return std::strtod(format_real6(v).c_str(), nullptr);
}

}  // namespace prefconflict
