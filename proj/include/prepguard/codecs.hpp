#pragma once

#include <vector>

#include "prepguard/tensor.hpp"

namespace prepguard {

// Compression-strength knob; lower means coarser quantization.
struct QualityFactor {
  int value = 75;
  explicit QualityFactor(int v) : value(v) {
    if (v < 0 || v > 100) throw RejectedInput("quality factor must lie in [0,100]");
  }
};

// Per-coefficient quantization steps for one block transform.
struct QuantTable {
  int block = 8;
  std::vector<int> steps;  // block*block entries, row-major, each in [1,255]
};

QuantTable jpeg_quant_table(int qf);
QuantTable webp_quant_table(int qf);

// 8x8 block DCT round-trip with the scaled standard table. No entropy coding,
// no deblocking: blocking artifacts are intentionally left in.
ImageTensor jpeg_like_roundtrip(const ImageTensor& img, int qf);

// 4x4 block DCT round-trip with a uniform step, then the in-loop deblocking
// filter over the reconstruction.
ImageTensor webp_like_roundtrip(const ImageTensor& img, int qf);

// VP8-style simple filter across every interior 4-aligned block boundary,
// vertical edges first, then horizontal on the updated pixels.
ImageTensor deblock_edges(const ImageTensor& img, int qf);

ImageTensor flip_lr(const ImageTensor& img);
ImageTensor flip_tb(const ImageTensor& img);

// 10*log10(1/MSE) over [0,1] intensities; identical images give +infinity.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Mean |p0-q0| across interior boundaries of the given grid spacing, both
// orientations, all channels, in [0,1] intensity units. The codec comparison
// uses spacing 8 (a block edge for both codecs); the filter tests use 4.
double boundary_discontinuity(const ImageTensor& img, int spacing);

// Blockiness introduced by a codec: mean absolute change of the boundary
// jump relative to the original, so true image edges cancel out and only
// codec-made discontinuities are counted.
double blocking_excess(const ImageTensor& original, const ImageTensor& processed,
                       int spacing);

}  // namespace prepguard
