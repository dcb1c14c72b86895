#pragma once

#include <string>
#include <utility>

#include "lorac/lora.hpp"
#include "lorac/model.hpp"

namespace lorac {

// W0 + alpha * recompose(A, B); the source layer is untouched.
Tensor merge_layer(const LoraConvLayer& layer);

// Fold y = BN(conv(x)) into a single conv with bias, eval-mode statistics:
//   W'[o] = W[o] * gamma[o] / sqrt(var[o] + eps)
//   b'[o] = beta[o] - gamma[o] * mean[o] / sqrt(var[o] + eps)
std::pair<Tensor, Tensor> fuse_batchnorm(const Tensor& conv_w, const Tensor& gamma,
                                         const Tensor& beta, const Tensor& mean,
                                         const Tensor& var, float eps);

// Fold every branch into its frozen weights, consuming the branches. A second
// merge is an error, not a silent double addition.
void merge_all(Network& net);

// Merge (and optionally BN-fuse) a copy of the network, write it as "LRCF",
// and return it. The emitted net has the pretrained architecture: no
// branches, no extra tensors (BN fusion off).
Network export_inference_model(const Network& net, bool fuse_bn, const std::string& path);

}  // namespace lorac
