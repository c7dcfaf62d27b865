#include "vsense/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::models {

namespace {

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<double> channel_norms(const ConvLayer& layer) {
    const std::size_t slice = layer.in_channels * layer.kernel_size;
    std::vector<double> norms(layer.out_channels);
    for (std::size_t j = 0; j < layer.out_channels; ++j) {
        double ss = 0.0;
        for (std::size_t e = 0; e < slice; ++e) {
            const double v = layer.v[j * slice + e];
            ss += v * v;
        }
        norms[j] = std::sqrt(ss);
        if (norms[j] <= 0.0) {
            throw Error(ErrorCode::InvalidConfig, "zero kernel direction norm");
        }
    }
    return norms;
}

/// dY (out x T) and the layer input X produce parameter grads and, when
/// dx is non-null, the grad with respect to X (accumulated into *dx).
LayerGrads conv_backward(const ConvLayer& layer, const std::vector<std::vector<double>>& x,
                         const std::vector<std::vector<double>>& dy,
                         std::vector<std::vector<double>>* dx) {
    const std::size_t t_len = x.empty() ? 0 : x[0].size();
    const std::size_t k = layer.kernel_size;
    const std::size_t slice = layer.in_channels * k;
    const auto w = effective_weights(layer);
    const auto norms = channel_norms(layer);

    LayerGrads grads;
    grads.v.assign(layer.v.size(), 0.0);
    grads.g.assign(layer.out_channels, 0.0);
    grads.bias.assign(layer.out_channels, 0.0);

    std::vector<double> dw(layer.v.size(), 0.0);
    for (std::size_t j = 0; j < layer.out_channels; ++j) {
        double dbias = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) dbias += dy[j][t];
        grads.bias[j] = dbias;
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            for (std::size_t s = 0; s < k; ++s) {
                double acc = 0.0;
                for (std::size_t t = s; t < t_len; ++t) acc += dy[j][t] * x[i][t - s];
                dw[(j * layer.in_channels + i) * k + s] = acc;
            }
        }
    }

    if (dx != nullptr) {
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            for (std::size_t t = 0; t < t_len; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < layer.out_channels; ++j) {
                    const std::size_t base = (j * layer.in_channels + i) * k;
                    for (std::size_t s = 0; s < k && t + s < t_len; ++s) {
                        acc += dy[j][t + s] * w[base + s];
                    }
                }
                (*dx)[i][t] += acc;
            }
        }
    }

    // chain through w = g v / ||v||:  dg = dw . v_hat,  dv = (g/n)(dw - dg v_hat)
    for (std::size_t j = 0; j < layer.out_channels; ++j) {
        const double n = norms[j];
        double dg = 0.0;
        for (std::size_t e = 0; e < slice; ++e) {
            dg += dw[j * slice + e] * layer.v[j * slice + e] / n;
        }
        grads.g[j] = dg;
        const double scale = layer.g[j] / n;
        for (std::size_t e = 0; e < slice; ++e) {
            grads.v[j * slice + e] =
                scale * (dw[j * slice + e] - dg * layer.v[j * slice + e] / n);
        }
    }
    return grads;
}

ConvLayer init_layer(std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
    ConvLayer layer;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel_size = k;
    layer.v.resize(out * in * k);
    layer.g.resize(out);
    layer.bias.assign(out, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k));
    for (auto& v : layer.v) v = rng.uniform(-bound, bound);
    const std::size_t slice = in * k;
    for (std::size_t j = 0; j < out; ++j) {
        double ss = 0.0;
        for (std::size_t e = 0; e < slice; ++e) {
            const double v = layer.v[j * slice + e];
            ss += v * v;
        }
        layer.g[j] = std::sqrt(ss);
    }
    return layer;
}

struct ForwardCache {
    // per block: the block input and the conv pre-activation
    std::vector<std::vector<std::vector<double>>> inputs;
    std::vector<std::vector<std::vector<double>>> pre_acts;
    std::vector<std::vector<double>> head_input;
    std::vector<double> output;
};

ForwardCache forward_cached(const CnnModel& model, const std::vector<std::vector<double>>& x) {
    if (x.size() != model.input_channels()) {
        throw Error(ErrorCode::ChannelMismatch,
                    "input has " + std::to_string(x.size()) + " channels, model expects " +
                        std::to_string(model.input_channels()));
    }
    ForwardCache cache;
    std::vector<std::vector<double>> cur = x;
    for (const auto& block : model.blocks) {
        cache.inputs.push_back(cur);
        auto h = conv1d_causal(cur, block.conv);
        cache.pre_acts.push_back(h);
        std::vector<std::vector<double>> out(h.size());
        for (std::size_t j = 0; j < h.size(); ++j) out[j] = leaky_relu(h[j], model.activation_slope);
        if (block.skip.has_value()) {
            const auto s = conv1d_causal(cur, *block.skip);
            for (std::size_t j = 0; j < out.size(); ++j) {
                for (std::size_t t = 0; t < out[j].size(); ++t) out[j][t] += s[j][t];
            }
        } else {
            if (cur.size() != out.size()) {
                throw Error(ErrorCode::ChannelMismatch, "identity skip across channel change");
            }
            for (std::size_t j = 0; j < out.size(); ++j) {
                for (std::size_t t = 0; t < out[j].size(); ++t) out[j][t] += cur[j][t];
            }
        }
        cur = std::move(out);
    }
    cache.head_input = cur;
    auto y = conv1d_causal(cur, model.head);
    cache.output = std::move(y[0]);
    return cache;
}

void check_flow_inputs(const signals::Recording& rec) {
    for (const auto& name : signals::kInputChannels) {
        if (!rec.has_channel(name)) {
            throw Error(ErrorCode::MissingColumn, "recording lacks channel " + name);
        }
    }
    if (!rec.has_channel(signals::kFlowChannel)) {
        throw Error(ErrorCode::MissingFlowChannel, "recording " + rec.id);
    }
}

void write_layer(std::ofstream& out, const std::string& tag, const ConvLayer& layer) {
    out << "layer " << tag << " in " << layer.in_channels << " out " << layer.out_channels
        << " k " << layer.kernel_size << "\n";
    const auto dump = [&out](const char* name, const std::vector<double>& values) {
        out << name << " " << values.size();
        for (double v : values) out << " " << format_full(v);
        out << "\n";
    };
    dump("v", layer.v);
    dump("g", layer.g);
    dump("bias", layer.bias);
}

ConvLayer read_layer(std::istream& in, const std::string& expect_tag) {
    std::string line;
    while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
    }
    std::istringstream header(line);
    std::string word, tag, key;
    ConvLayer layer;
    header >> word >> tag;
    if (word != "layer" || tag != expect_tag) {
        throw Error(ErrorCode::IoError, "expected layer " + expect_tag + ", got: " + line);
    }
    while (header >> key) {
        if (key == "in") header >> layer.in_channels;
        else if (key == "out") header >> layer.out_channels;
        else if (key == "k") header >> layer.kernel_size;
    }
    const auto read_vec = [&in](const char* name, std::size_t expect) {
        std::string vline;
        while (std::getline(in, vline) && (vline.empty() || vline[0] == '#')) {
        }
        std::istringstream ss(vline);
        std::string vname;
        std::size_t count = 0;
        ss >> vname >> count;
        if (vname != name || count != expect) {
            throw Error(ErrorCode::IoError, std::string("bad parameter line for ") + name);
        }
        std::vector<double> values(count);
        for (auto& v : values) ss >> v;
        if (!ss) throw Error(ErrorCode::IoError, std::string("truncated values for ") + name);
        return values;
    };
    layer.v = read_vec("v", layer.out_channels * layer.in_channels * layer.kernel_size);
    layer.g = read_vec("g", layer.out_channels);
    layer.bias = read_vec("bias", layer.out_channels);
    return layer;
}

}  // namespace

PRModel fit_pr(const std::vector<std::array<double, 6>>& inputs,
               const std::vector<double>& targets) {
    if (inputs.size() != targets.size()) {
        throw Error(ErrorCode::LengthMismatch, "inputs vs targets");
    }
    const std::size_t n = inputs.size();
    if (n < 13) {
        throw Error(ErrorCode::TooFewSamples,
                    std::to_string(n) + " samples for 13 coefficients");
    }

    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), 13);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        design(row, 0) = 1.0;
        for (int i = 0; i < 6; ++i) {
            design(row, 1 + i) = inputs[r][i];
            design(row, 7 + i) = inputs[r][i] * inputs[r][i];
        }
        rhs(row) = targets[r];
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(12);
    const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(smin > 0.0) || cond > 1e12) {
        throw Error(ErrorCode::RankDeficient,
                    "design matrix condition number " + format_full(cond));
    }
    const Eigen::VectorXd coef = svd.solve(rhs);

    PRModel model;
    model.alpha = coef(0);
    for (int i = 0; i < 6; ++i) {
        model.beta[i] = coef(1 + i);
        model.gamma[i] = coef(7 + i);
    }
    model.condition_number = cond;
    return model;
}

double predict_pr(const PRModel& model, const std::array<double, 6>& x) {
    double y = model.alpha;
    for (int i = 0; i < 6; ++i) y += model.beta[i] * x[i] + model.gamma[i] * x[i] * x[i];
    return y;
}

std::vector<double> predict_pr(const PRModel& model,
                               const std::vector<std::array<double, 6>>& inputs) {
    std::vector<double> out(inputs.size());
    for (std::size_t r = 0; r < inputs.size(); ++r) out[r] = predict_pr(model, inputs[r]);
    return out;
}

std::vector<double> effective_weights(const ConvLayer& layer) {
    const auto norms = channel_norms(layer);
    const std::size_t slice = layer.in_channels * layer.kernel_size;
    std::vector<double> w(layer.v.size());
    for (std::size_t j = 0; j < layer.out_channels; ++j) {
        const double scale = layer.g[j] / norms[j];
        for (std::size_t e = 0; e < slice; ++e) w[j * slice + e] = scale * layer.v[j * slice + e];
    }
    return w;
}

std::vector<std::vector<double>> conv1d_causal(const std::vector<std::vector<double>>& x,
                                               const ConvLayer& layer) {
    if (x.size() != layer.in_channels) {
        throw Error(ErrorCode::ChannelMismatch,
                    "conv input has " + std::to_string(x.size()) + " channels, layer expects " +
                        std::to_string(layer.in_channels));
    }
    const std::size_t t_len = x.empty() ? 0 : x[0].size();
    const std::size_t k = layer.kernel_size;
    const auto w = effective_weights(layer);

    std::vector<std::vector<double>> y(layer.out_channels, std::vector<double>(t_len));
    for (std::size_t j = 0; j < layer.out_channels; ++j) {
        for (std::size_t t = 0; t < t_len; ++t) {
            double acc = layer.bias[j];
            for (std::size_t i = 0; i < layer.in_channels; ++i) {
                const std::size_t base = (j * layer.in_channels + i) * k;
                for (std::size_t s = 0; s < k; ++s) {
                    // the padding multiply is kept so shifted inputs replay
                    // the identical arithmetic
                    const double xv = t >= s ? x[i][t - s] : 0.0;
                    acc += xv * w[base + s];
                }
            }
            y[j][t] = acc;
        }
    }
    return y;
}

std::vector<double> leaky_relu(const std::vector<double>& x, double slope) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
    return y;
}

std::size_t CnnModel::receptive_field() const {
    std::size_t rf = 1;
    for (const auto& block : blocks) rf += block.conv.kernel_size - 1;
    return rf + (head.kernel_size - 1);
}

std::size_t CnnModel::parameter_count() const {
    std::size_t count = 0;
    const auto layer_count = [](const ConvLayer& l) { return l.v.size() + l.bias.size(); };
    for (const auto& block : blocks) {
        count += layer_count(block.conv);
        if (block.skip.has_value()) count += layer_count(*block.skip);
    }
    return count + layer_count(head);
}

CnnModel init_cnn(const CnnArchitecture& arch, std::uint64_t seed) {
    if (arch.blocks == 0 || arch.kernel_size == 0 || arch.channels == 0 ||
        arch.input_channels == 0) {
        throw Error(ErrorCode::InvalidConfig, "empty architecture");
    }
    Rng rng(seed);
    CnnModel model;
    std::size_t in = arch.input_channels;
    for (std::size_t b = 0; b < arch.blocks; ++b) {
        CnnBlock block;
        block.conv = init_layer(in, arch.channels, arch.kernel_size, rng);
        if (in != arch.channels) {
            block.skip = init_layer(in, arch.channels, 1, rng);
        }
        model.blocks.push_back(std::move(block));
        in = arch.channels;
    }
    model.head = init_layer(in, 1, 1, rng);
    return model;
}

std::vector<double> cnn_forward(const CnnModel& model, const std::vector<std::vector<double>>& x) {
    return forward_cached(model, x).output;
}

CnnGradients cnn_gradients(const CnnModel& model, const std::vector<std::vector<double>>& x,
                           const std::vector<double>& target, std::size_t loss_start) {
    const std::size_t t_len = x.empty() ? 0 : x[0].size();
    if (target.size() != t_len) {
        throw Error(ErrorCode::LengthMismatch, "target length vs input length");
    }
    if (loss_start >= t_len) {
        throw Error(ErrorCode::BadLength, "loss_start beyond sequence end");
    }
    const auto cache = forward_cached(model, x);
    const double count = static_cast<double>(t_len - loss_start);

    CnnGradients grads;
    grads.loss = 0.0;
    std::vector<std::vector<double>> dy(1, std::vector<double>(t_len, 0.0));
    for (std::size_t t = loss_start; t < t_len; ++t) {
        const double r = cache.output[t] - target[t];
        grads.loss += r * r;
        dy[0][t] = 2.0 * r / count;
    }
    grads.loss /= count;

    std::vector<std::vector<double>> d_head_in(model.head.in_channels,
                                               std::vector<double>(t_len, 0.0));
    grads.head = conv_backward(model.head, cache.head_input, dy, &d_head_in);

    grads.conv.resize(model.blocks.size());
    grads.skip.resize(model.blocks.size());
    std::vector<std::vector<double>> dout = std::move(d_head_in);
    for (std::size_t b = model.blocks.size(); b-- > 0;) {
        const auto& block = model.blocks[b];
        const auto& x_in = cache.inputs[b];
        const auto& h = cache.pre_acts[b];

        std::vector<std::vector<double>> dh(h.size(), std::vector<double>(t_len));
        for (std::size_t j = 0; j < h.size(); ++j) {
            for (std::size_t t = 0; t < t_len; ++t) {
                // derivative at exactly zero is taken as 1
                dh[j][t] = dout[j][t] * (h[j][t] >= 0.0 ? 1.0 : model.activation_slope);
            }
        }

        std::vector<std::vector<double>> dx(x_in.size(), std::vector<double>(t_len, 0.0));
        grads.conv[b] = conv_backward(block.conv, x_in, dh, &dx);
        if (block.skip.has_value()) {
            grads.skip[b] = conv_backward(*block.skip, x_in, dout, &dx);
        } else {
            for (std::size_t j = 0; j < dx.size(); ++j) {
                for (std::size_t t = 0; t < t_len; ++t) dx[j][t] += dout[j][t];
            }
        }
        dout = std::move(dx);
    }
    return grads;
}

namespace {

template <typename LayerFn>
void for_each_layer(const CnnModel& model, LayerFn&& fn) {
    for (const auto& block : model.blocks) {
        fn(block.conv);
        if (block.skip.has_value()) fn(*block.skip);
    }
    fn(model.head);
}

template <typename LayerFn>
void for_each_layer_mut(CnnModel& model, LayerFn&& fn) {
    for (auto& block : model.blocks) {
        fn(block.conv);
        if (block.skip.has_value()) fn(*block.skip);
    }
    fn(model.head);
}

}  // namespace

std::vector<double> flatten_parameters(const CnnModel& model) {
    std::vector<double> out;
    for_each_layer(model, [&out](const ConvLayer& l) {
        out.insert(out.end(), l.v.begin(), l.v.end());
        out.insert(out.end(), l.g.begin(), l.g.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    });
    return out;
}

void unflatten_parameters(CnnModel& model, const std::vector<double>& values) {
    std::size_t pos = 0;
    for_each_layer_mut(model, [&](ConvLayer& l) {
        const auto take = [&](std::vector<double>& dst) {
            if (pos + dst.size() > values.size()) {
                throw Error(ErrorCode::BadLength, "parameter vector too short");
            }
            std::copy(values.begin() + static_cast<std::ptrdiff_t>(pos),
                      values.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()),
                      dst.begin());
            pos += dst.size();
        };
        take(l.v);
        take(l.g);
        take(l.bias);
    });
    if (pos != values.size()) {
        throw Error(ErrorCode::BadLength, "parameter vector too long");
    }
}

std::vector<double> flatten_gradients(const CnnGradients& grads) {
    std::vector<double> out;
    const auto push = [&out](const LayerGrads& l) {
        out.insert(out.end(), l.v.begin(), l.v.end());
        out.insert(out.end(), l.g.begin(), l.g.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    };
    for (std::size_t b = 0; b < grads.conv.size(); ++b) {
        push(grads.conv[b]);
        if (grads.skip[b].has_value()) push(*grads.skip[b]);
    }
    push(grads.head);
    return out;
}

std::vector<std::vector<double>> input_matrix(const signals::Recording& rec) {
    std::vector<std::vector<double>> x;
    x.reserve(signals::kInputChannels.size());
    for (const auto& name : signals::kInputChannels) x.push_back(rec.channel(name));
    return x;
}

double evaluate_cnn_mse(const CnnModel& model, const std::vector<signals::Recording>& recs,
                        std::size_t skip_samples) {
    double ss = 0.0;
    std::size_t count = 0;
    for (const auto& rec : recs) {
        check_flow_inputs(rec);
        const auto pred = cnn_forward(model, input_matrix(rec));
        const auto& target = rec.channel(signals::kFlowChannel);
        for (std::size_t t = skip_samples; t < pred.size(); ++t) {
            const double r = pred[t] - target[t];
            ss += r * r;
            ++count;
        }
    }
    if (count == 0) throw Error(ErrorCode::EmptyInput, "no samples to evaluate");
    return ss / static_cast<double>(count);
}

TrainResult train_cnn(const std::vector<signals::Recording>& train,
                      const std::vector<signals::Recording>& validation,
                      const CnnArchitecture& arch, const TrainConfig& cfg) {
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "no training recordings");
    if (cfg.epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
    if (cfg.learning_rate < 0.0 || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
        cfg.beta2 >= 1.0 || cfg.epsilon <= 0.0) {
        throw Error(ErrorCode::InvalidConfig, "bad optimizer constants");
    }

    CnnModel model = init_cnn(arch, mix_seed(cfg.seed, 3));
    const std::size_t rf = model.receptive_field();
    if (cfg.batch_length <= rf) {
        throw Error(ErrorCode::InvalidConfig, "batch_length must exceed the receptive field");
    }

    struct TrainRec {
        std::vector<std::vector<double>> x;
        const std::vector<double>* target;
        std::size_t length;
    };
    std::vector<TrainRec> usable;
    std::vector<double> weights;
    std::size_t total = 0;
    for (const auto& rec : train) {
        check_flow_inputs(rec);
        if (rec.length() < rf + 1) continue;
        usable.push_back({input_matrix(rec), &rec.channel(signals::kFlowChannel), rec.length()});
        weights.push_back(static_cast<double>(rec.length()));
        total += rec.length();
    }
    if (usable.empty()) {
        throw Error(ErrorCode::TooFewSamples, "every training recording is shorter than the receptive field");
    }

    std::size_t windows_per_epoch = cfg.windows_per_epoch;
    if (windows_per_epoch == 0) {
        windows_per_epoch = (total + cfg.batch_length - 1) / cfg.batch_length;
    }

    Rng order(mix_seed(cfg.seed, 4));
    std::vector<double> params = flatten_parameters(model);
    std::vector<double> m(params.size(), 0.0), v2(params.size(), 0.0);
    std::size_t step = 0;

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = params;
    const bool select_on_val = !validation.empty();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t wnd = 0; wnd < windows_per_epoch; ++wnd) {
            const auto& rec = usable[order.discrete(weights)];
            const std::size_t len = std::min(cfg.batch_length, rec.length);
            const std::size_t start = order.uniform_index(rec.length - len + 1);

            std::vector<std::vector<double>> x(rec.x.size());
            for (std::size_t c = 0; c < rec.x.size(); ++c) {
                x[c].assign(rec.x[c].begin() + static_cast<std::ptrdiff_t>(start),
                            rec.x[c].begin() + static_cast<std::ptrdiff_t>(start + len));
            }
            std::vector<double> target(
                rec.target->begin() + static_cast<std::ptrdiff_t>(start),
                rec.target->begin() + static_cast<std::ptrdiff_t>(start + len));

            const auto grads = cnn_gradients(model, x, target, rf - 1);
            if (!std::isfinite(grads.loss)) {
                throw Error(ErrorCode::DivergedLoss,
                            "train loss non-finite at epoch " + std::to_string(epoch));
            }
            loss_sum += grads.loss;

            const auto g = flatten_gradients(grads);
            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < params.size(); ++p) {
                m[p] = cfg.beta1 * m[p] + (1.0 - cfg.beta1) * g[p];
                v2[p] = cfg.beta2 * v2[p] + (1.0 - cfg.beta2) * g[p] * g[p];
                params[p] -= cfg.learning_rate * (m[p] / bc1) / (std::sqrt(v2[p] / bc2) + cfg.epsilon);
            }
            unflatten_parameters(model, params);
        }

        EpochStats stats;
        stats.train_mse = loss_sum / static_cast<double>(windows_per_epoch);
        stats.val_mse = select_on_val ? evaluate_cnn_mse(model, validation, rf - 1)
                                      : stats.train_mse;
        result.curve.push_back(stats);
        const double metric = select_on_val ? stats.val_mse : stats.train_mse;
        if (metric < best_val) {
            best_val = metric;
            best_params = params;
            result.best_epoch = epoch;
        }
    }

    unflatten_parameters(model, best_params);
    result.model = std::move(model);
    return result;
}

void save_pr(const PRModel& model, const std::string& path, const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "vsense-pr 1\n";
    out << "alpha " << format_full(model.alpha) << "\n";
    out << "beta";
    for (double b : model.beta) out << " " << format_full(b);
    out << "\ngamma";
    for (double g : model.gamma) out << " " << format_full(g);
    out << "\ncondition " << format_full(model.condition_number) << "\n";
}

PRModel load_pr(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    PRModel model;
    std::string line;
    bool versioned = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "vsense-pr") {
            versioned = true;
        } else if (key == "alpha") {
            ss >> model.alpha;
        } else if (key == "beta") {
            for (auto& b : model.beta) ss >> b;
        } else if (key == "gamma") {
            for (auto& g : model.gamma) ss >> g;
        } else if (key == "condition") {
            ss >> model.condition_number;
        } else {
            throw Error(ErrorCode::IoError, "unexpected line in " + path + ": " + line);
        }
        if (!ss) throw Error(ErrorCode::IoError, "malformed line in " + path + ": " + line);
    }
    if (!versioned) throw Error(ErrorCode::IoError, path + " is not a pr model file");
    return model;
}

void save_cnn(const CnnModel& model, const std::string& path, const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "vsense-cnn 1\n";
    out << "slope " << format_full(model.activation_slope) << "\n";
    out << "blocks " << model.blocks.size() << "\n";
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        write_layer(out, "conv" + std::to_string(b), model.blocks[b].conv);
        if (model.blocks[b].skip.has_value()) {
            write_layer(out, "skip" + std::to_string(b), *model.blocks[b].skip);
        }
    }
    write_layer(out, "head", model.head);
}

CnnModel load_cnn(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string line;
    while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
    }
    {
        std::istringstream ss(line);
        std::string magic;
        int version = 0;
        ss >> magic >> version;
        if (magic != "vsense-cnn" || version != 1) {
            throw Error(ErrorCode::IoError, path + " is not a cnn model file");
        }
    }
    CnnModel model;
    std::size_t blocks = 0;
    for (int i = 0; i < 2; ++i) {
        std::getline(in, line);
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "slope") ss >> model.activation_slope;
        else if (key == "blocks") ss >> blocks;
        else throw Error(ErrorCode::IoError, "unexpected header line: " + line);
        if (!ss) throw Error(ErrorCode::IoError, "malformed header line: " + line);
    }
    for (std::size_t b = 0; b < blocks; ++b) {
        CnnBlock block;
        block.conv = read_layer(in, "conv" + std::to_string(b));
        if (block.conv.in_channels != block.conv.out_channels) {
            block.skip = read_layer(in, "skip" + std::to_string(b));
        }
        model.blocks.push_back(std::move(block));
    }
    model.head = read_layer(in, "head");
    return model;
}

}  // namespace vsense::models
