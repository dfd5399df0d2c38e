#pragma once

#include <string>

#include "srkit/metrics.hpp"

namespace srkit {

// 8-bit RGB PNG I/O. Grayscale, palette and alpha inputs are converted to
// RGB8 on load; 16-bit inputs are reduced.
ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

} // namespace srkit
