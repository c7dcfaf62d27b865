#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vsense/signals.hpp"

namespace vsense::models {

/// Static second-order polynomial regression without cross-terms,
/// y = alpha + sum_i beta_i x_i + sum_i gamma_i x_i^2.
struct PRModel {
    double alpha = 0.0;
    std::array<double, 6> beta{};
    std::array<double, 6> gamma{};
    double condition_number = 0.0;  // of the design matrix, reported by fit_pr
};

/// Least squares over the 13 coefficients via orthogonal factorization.
PRModel fit_pr(const std::vector<std::array<double, 6>>& inputs,
               const std::vector<double>& targets);

double predict_pr(const PRModel& model, const std::array<double, 6>& x);
std::vector<double> predict_pr(const PRModel& model,
                               const std::vector<std::array<double, 6>>& inputs);

/// Weight-normalized causal convolution layer. The effective kernel is
/// w[j] = g[j] * v[j] / ||v[j]||, the norm taken over each output channel's
/// in_channels x kernel_size slice.
struct ConvLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 0;
    std::vector<double> v;     // [out][in][s]
    std::vector<double> g;     // [out]
    std::vector<double> bias;  // [out]

    double& v_at(std::size_t j, std::size_t i, std::size_t s) {
        return v[(j * in_channels + i) * kernel_size + s];
    }
    double v_at(std::size_t j, std::size_t i, std::size_t s) const {
        return v[(j * in_channels + i) * kernel_size + s];
    }
};

/// w as used by the convolution, same layout as v.
std::vector<double> effective_weights(const ConvLayer& layer);

/// y[j][t] = bias[j] + sum_i sum_s x[i][t-s] w[j][i][s], zero padded on the
/// left (x_t = 0 for t < 0). The padding terms are multiplied in explicitly
/// so shifted inputs reproduce shifted outputs bit for bit.
std::vector<std::vector<double>> conv1d_causal(const std::vector<std::vector<double>>& x,
                                               const ConvLayer& layer);

std::vector<double> leaky_relu(const std::vector<double>& x, double slope = 0.1);

struct CnnBlock {
    ConvLayer conv;
    // 1x1 causal projection when in and out channel counts differ; identity
    // skip otherwise
    std::optional<ConvLayer> skip;
};

struct CnnArchitecture {
    std::size_t input_channels = 6;
    std::size_t blocks = 3;
    std::size_t kernel_size = 4;
    std::size_t channels = 16;
};

struct CnnModel {
    std::vector<CnnBlock> blocks;
    ConvLayer head;  // 1x1 to a single output channel, no activation
    double activation_slope = 0.1;

    std::size_t input_channels() const {
        return blocks.empty() ? head.in_channels : blocks.front().conv.in_channels;
    }
    /// 1 + sum over blocks of (kernel_size - 1); head is 1x1.
    std::size_t receptive_field() const;
    /// Kernel entries plus biases. g carries no extra freedom (it duplicates
    /// the scale of v), so the count treats (v, g) as one effective kernel;
    /// the default architecture lands at 2609.
    std::size_t parameter_count() const;
};

/// Seeded init: v uniform in +/- 1/sqrt(in*k), g = ||v|| per output channel
/// (so the initial effective kernel equals v), bias zero.
CnnModel init_cnn(const CnnArchitecture& arch, std::uint64_t seed);

/// Full-sequence causal forward pass; x is channel-major 6 x T.
std::vector<double> cnn_forward(const CnnModel& model, const std::vector<std::vector<double>>& x);

struct LayerGrads {
    std::vector<double> v, g, bias;
};

struct CnnGradients {
    std::vector<LayerGrads> conv;                 // per block
    std::vector<std::optional<LayerGrads>> skip;  // per block, where present
    LayerGrads head;
    double loss = 0.0;
};

/// Exact gradients of mean((forward(x) - target)^2) over t >= loss_start,
/// through the weight norm and the activation (slope 0.1 for negative
/// pre-activations, derivative at exactly 0 taken as 1).
CnnGradients cnn_gradients(const CnnModel& model, const std::vector<std::vector<double>>& x,
                           const std::vector<double>& target, std::size_t loss_start = 0);

/// All trainable parameters (v, g, bias per layer) in a fixed order shared
/// with flatten_gradients.
std::vector<double> flatten_parameters(const CnnModel& model);
void unflatten_parameters(CnnModel& model, const std::vector<double>& values);
std::vector<double> flatten_gradients(const CnnGradients& grads);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_length = 256;  // samples per training window
    // the default net needs a few hundred epochs on the default recording to
    // settle its plateau biases; validation selection keeps the best snapshot
    std::size_t epochs = 400;
    std::size_t windows_per_epoch = 0;  // 0 = enough to cover the train set once
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    CnnModel model;  // snapshot with the lowest validation MSE
    std::vector<EpochStats> curve;
    std::size_t best_epoch = 0;  // index into curve
};

/// Adaptive-moment gradient descent over seeded random contiguous windows of
/// the training recordings. The first receptive_field - 1 samples of every
/// window are excluded from the loss. Validation MSE is computed after each
/// epoch and the best snapshot is returned.
TrainResult train_cnn(const std::vector<signals::Recording>& train,
                      const std::vector<signals::Recording>& validation,
                      const CnnArchitecture& arch, const TrainConfig& cfg);

/// Input channels of a recording in canonical order, channel-major.
std::vector<std::vector<double>> input_matrix(const signals::Recording& rec);

/// MSE of the model on a set of recordings, pooled over samples with the
/// first skip_samples of each recording excluded.
double evaluate_cnn_mse(const CnnModel& model, const std::vector<signals::Recording>& recs,
                        std::size_t skip_samples = 0);

void save_pr(const PRModel& model, const std::string& path,
             const std::string& header_comment = "");
PRModel load_pr(const std::string& path);
void save_cnn(const CnnModel& model, const std::string& path,
              const std::string& header_comment = "");
CnnModel load_cnn(const std::string& path);

}  // namespace vsense::models
