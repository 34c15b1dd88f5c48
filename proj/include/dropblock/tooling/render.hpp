#pragma once

#include <span>
#include <string>

#include "dropblock/tensor.hpp"

namespace dropblock::tooling {

enum class RenderFormat { Ascii, Pgm };

RenderFormat render_format_from(const std::string& name);

/// Renders the (sample, channel) plane of a keep mask. Ascii draws '#' for
/// kept and '.' for dropped, one line per row. Pgm is binary P5 with maxval
/// 255, kept = 255 and dropped = 0.
std::string render_mask(const BinaryTensor4& mask, int sample, int channel,
                        RenderFormat format);

/// Reads a P5 image back into a (1, 1, h, w) mask. Pixels must be 0 or 255.
BinaryTensor4 parse_pgm_mask(std::span<const char> bytes);

}  // namespace dropblock::tooling
