#pragma once

#include "sage/dense_map.hpp"
#include "sage/types.hpp"

namespace sage {

struct SoftHistogram {
  VecX bins;          // K non-negative entries, close to unit mass for interior data
  double bandwidth = 0.0;

  int bin_count() const { return static_cast<int>(bins.size()); }
};

// Scale-invariant depth loss in variance form: with masked log-ratio
// d = log(D + eps) - log(Dref + eps), returns mean(d^2) - mean(d)^2,
// which vanishes whenever D is a positive multiple of Dref.
double scale_invariant_loss(const ImageD& depth, const ImageD& depth_ref, const MaskImage& mask,
                            double epsilon = 1e-4);

// Soft histogram of one channel over the mask. Bin k has center
// mu_k = -1 + (2k + 1) / K and collects sigmoid((v - mu_k + 1/K) / beta) -
// sigmoid((v - mu_k - 1/K) / beta) averaged over masked pixels.
SoftHistogram soft_histogram(const DenseMap& map, int channel, int bins, double bandwidth);
SoftHistogram soft_histogram(const ImageD& values, const MaskImage& mask, int bins,
                             double bandwidth);

// Squared L2 distance between the cumulative distributions of two histograms.
double emd_distance(const SoftHistogram& a, const SoftHistogram& b);

// Triplet histogram loss over descriptor channels with hinge margin:
// (1/C) sum_i max(d(src_i, tgt_i)/K - d(src_i, far_i)/K + margin, 0).
double triplet_histogram_loss(const DenseMap& src, const DenseMap& tgt, const DenseMap& far,
                              int bins, double bandwidth, double margin);

struct Flow {
  ImageD u;  // x displacement
  ImageD v;  // y displacement

  int height() const { return u.height(); }
  int width() const { return u.width(); }
};

// Normalized flow endpoint loss; zero when both flows vanish on the mask.
double flow_loss(const Flow& flow_ref, const Flow& flow, const MaskImage& mask);

}  // namespace sage
