#pragma once

#include <string>

#include "stlab/tensor.hpp"

namespace stlab::io {

/// Writes a 2-D tensor as binary (P5) PGM, max-normalized to 0..255. The
/// normalization scale (and optional log(v + 0.001) display transform) is
/// recorded in a `path + ".json"` sidecar so pixel values stay recoverable.
void write_pgm(const std::string& path, const Tensor<double>& image, bool log_rescale = false);

}  // namespace stlab::io
