#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prefconflict {

// Whitespace tokenization; the only tokenizer in the toolkit.
std::vector<std::string_view> tokenize(std::string_view text);

// Decimal text with 6 significant digits ("%.6g"), the serialization format
// for every real that crosses a file boundary.
std::string format_real6(double v);

// Round to the nearest 6-significant-digit value (format + reparse), so that
// in-memory reals round-trip exactly through their serialized form.
double quantize_real6(double v);

}  // namespace prefconflict
