#include "vsense/models.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"
#include "vsense/synthgen.hpp"

using namespace vsense;
using models::ConvLayer;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "vsense_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// independent reference for fit_pr: normal equations solved by Gaussian
// elimination with partial pivoting
std::array<double, 13> normal_equations_fit(const std::vector<std::array<double, 6>>& inputs,
                                            const std::vector<double>& targets) {
    const std::size_t n = inputs.size();
    auto design_row = [](const std::array<double, 6>& x) {
        std::array<double, 13> row{};
        row[0] = 1.0;
        for (int i = 0; i < 6; ++i) {
            row[1 + i] = x[i];
            row[7 + i] = x[i] * x[i];
        }
        return row;
    };

    double ata[13][13] = {};
    double atb[13] = {};
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = design_row(inputs[r]);
        for (int a = 0; a < 13; ++a) {
            atb[a] += row[a] * targets[r];
            for (int b = 0; b < 13; ++b) ata[a][b] += row[a] * row[b];
        }
    }

    for (int col = 0; col < 13; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 13; ++r) {
            if (std::abs(ata[r][col]) > std::abs(ata[pivot][col])) pivot = r;
        }
        std::swap(ata[col], ata[pivot]);
        std::swap(atb[col], atb[pivot]);
        for (int r = col + 1; r < 13; ++r) {
            const double f = ata[r][col] / ata[col][col];
            for (int c = col; c < 13; ++c) ata[r][c] -= f * ata[col][c];
            atb[r] -= f * atb[col];
        }
    }
    std::array<double, 13> coef{};
    for (int r = 12; r >= 0; --r) {
        double acc = atb[r];
        for (int c = r + 1; c < 13; ++c) acc -= ata[r][c] * coef[c];
        coef[r] = acc / ata[r][r];
    }
    return coef;
}

ConvLayer layer_with_weights(std::size_t in, std::size_t out, std::size_t k,
                             std::vector<double> w, std::vector<double> bias) {
    // v = w and g = ||w|| per output channel reproduce w exactly
    ConvLayer layer;
    layer.in_channels = in;
    layer.out_channels = out;
    layer.kernel_size = k;
    layer.v = std::move(w);
    layer.bias = std::move(bias);
    const std::size_t slice = in * k;
    layer.g.resize(out);
    for (std::size_t j = 0; j < out; ++j) {
        double ss = 0.0;
        for (std::size_t e = 0; e < slice; ++e) ss += layer.v[j * slice + e] * layer.v[j * slice + e];
        layer.g[j] = std::sqrt(ss);
    }
    return layer;
}

double mse_from_forward(const models::CnnModel& model, const std::vector<std::vector<double>>& x,
                        const std::vector<double>& target, std::size_t start) {
    const auto y = models::cnn_forward(model, x);
    double ss = 0.0;
    for (std::size_t t = start; t < y.size(); ++t) ss += (y[t] - target[t]) * (y[t] - target[t]);
    return ss / static_cast<double>(y.size() - start);
}

std::vector<std::vector<double>> random_input(std::size_t channels, std::size_t t_len,
                                              std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> x(channels, std::vector<double>(t_len));
    for (auto& ch : x) {
        for (auto& v : ch) v = rng.normal();
    }
    return x;
}

}  // namespace

TEST_CASE("fit_pr recovers exact coefficients and matches the normal equations") {
    Rng rng(41);
    std::vector<std::array<double, 6>> inputs(1000);
    std::vector<double> targets(1000);
    for (std::size_t r = 0; r < inputs.size(); ++r) {
        for (auto& v : inputs[r]) v = rng.uniform(-2.0, 2.0);
        targets[r] = 2.0 + 3.0 * inputs[r][0] + 0.5 * inputs[r][1] * inputs[r][1];
    }

    const auto model = models::fit_pr(inputs, targets);
    CHECK(std::abs(model.alpha - 2.0) < 1e-6);
    CHECK(std::abs(model.beta[0] - 3.0) < 1e-6);
    CHECK(std::abs(model.gamma[1] - 0.5) < 1e-6);
    for (int i = 1; i < 6; ++i) CHECK(std::abs(model.beta[i]) < 1e-6);
    for (int i = 0; i < 6; ++i) {
        if (i != 1) CHECK(std::abs(model.gamma[i]) < 1e-6);
    }
    CHECK(model.condition_number > 1.0);

    SUBCASE("agrees with the independent normal-equations solve, with noise") {
        for (std::size_t r = 0; r < targets.size(); ++r) targets[r] += 0.05 * rng.normal();
        const auto noisy = models::fit_pr(inputs, targets);
        const auto oracle = normal_equations_fit(inputs, targets);
        CHECK(std::abs(noisy.alpha - oracle[0]) < 1e-6);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(noisy.beta[i] - oracle[1 + i]) < 1e-6);
            CHECK(std::abs(noisy.gamma[i] - oracle[7 + i]) < 1e-6);
        }
    }

    SUBCASE("residuals are orthogonal to the design columns") {
        for (std::size_t r = 0; r < targets.size(); ++r) targets[r] += 0.05 * rng.normal();
        const auto noisy = models::fit_pr(inputs, targets);
        std::array<double, 13> dot{};
        std::array<double, 13> colnorm{};
        double resnorm = 0.0;
        for (std::size_t r = 0; r < inputs.size(); ++r) {
            const double res = targets[r] - models::predict_pr(noisy, inputs[r]);
            resnorm += res * res;
            std::array<double, 13> row{};
            row[0] = 1.0;
            for (int i = 0; i < 6; ++i) {
                row[1 + i] = inputs[r][i];
                row[7 + i] = inputs[r][i] * inputs[r][i];
            }
            for (int c = 0; c < 13; ++c) {
                dot[c] += row[c] * res;
                colnorm[c] += row[c] * row[c];
            }
        }
        resnorm = std::sqrt(resnorm);
        for (int c = 0; c < 13; ++c) {
            CHECK(std::abs(dot[c]) / (std::sqrt(colnorm[c]) * resnorm) < 1e-8);
        }
    }
}

TEST_CASE("fit_pr degenerate inputs") {
    SUBCASE("all-zero targets give all-zero coefficients") {
        Rng rng(43);
        std::vector<std::array<double, 6>> inputs(100);
        for (auto& row : inputs) {
            for (auto& v : row) v = rng.uniform(-1.0, 1.0);
        }
        const std::vector<double> targets(100, 0.0);
        const auto model = models::fit_pr(inputs, targets);
        CHECK(std::abs(model.alpha) < 1e-9);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(model.beta[i]) < 1e-9);
            CHECK(std::abs(model.gamma[i]) < 1e-9);
        }
    }

    SUBCASE("too few samples") {
        std::vector<std::array<double, 6>> inputs(12);
        std::vector<double> targets(12, 1.0);
        try {
            models::fit_pr(inputs, targets);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::TooFewSamples);
        }
    }

    SUBCASE("constant channel is rank deficient") {
        Rng rng(44);
        std::vector<std::array<double, 6>> inputs(200);
        std::vector<double> targets(200);
        for (std::size_t r = 0; r < inputs.size(); ++r) {
            for (auto& v : inputs[r]) v = rng.uniform(-1.0, 1.0);
            inputs[r][2] = 1.0;
            targets[r] = rng.normal();
        }
        try {
            models::fit_pr(inputs, targets);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::RankDeficient);
        }
    }
}

TEST_CASE("predict_pr closed forms") {
    models::PRModel m;
    m.alpha = 1.0;
    CHECK(models::predict_pr(m, {9.0, -3.0, 0.5, 2.0, 7.0, -1.0}) == 1.0);

    m.beta[0] = 2.0;
    m.alpha = 1.0;
    CHECK(models::predict_pr(m, {3.0, 0.0, 0.0, 0.0, 0.0, 0.0}) == 7.0);

    models::PRModel q;
    q.alpha = 1.5;
    q.gamma[0] = 1.0;
    CHECK(models::predict_pr(q, {-2.0, 0.0, 0.0, 0.0, 0.0, 0.0}) == 1.5 + 4.0);
}

TEST_CASE("conv1d_causal hand examples") {
    SUBCASE("running pair sum") {
        const auto layer = layer_with_weights(1, 1, 2, {1.0, 1.0}, {0.0});
        const auto y = models::conv1d_causal({{1.0, 2.0, 3.0}}, layer);
        REQUIRE(y.size() == 1);
        CHECK(y[0] == std::vector<double>{1.0, 3.0, 5.0});
    }

    SUBCASE("channel mixing with unit kernel") {
        const auto layer = layer_with_weights(2, 1, 1, {1.0, 1.0}, {0.0});
        const auto y = models::conv1d_causal({{1.0, 2.0}, {3.0, 4.0}}, layer);
        CHECK(y[0] == std::vector<double>{4.0, 6.0});
    }

    SUBCASE("zero gain leaves only the bias") {
        ConvLayer layer = layer_with_weights(2, 1, 3, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {0.5});
        layer.g[0] = 0.0;
        const auto y = models::conv1d_causal({{1.0, -1.0, 2.0}, {0.5, 0.5, 0.5}}, layer);
        for (double v : y[0]) CHECK(v == 0.5);
    }

    SUBCASE("channel count mismatch throws") {
        const auto layer = layer_with_weights(2, 1, 1, {1.0, 1.0}, {0.0});
        CHECK_THROWS_AS(models::conv1d_causal({{1.0}}, layer), Error);
    }
}

TEST_CASE("leaky_relu") {
    const auto y = models::leaky_relu({2.0, -2.0, 0.0});
    CHECK(y[0] == 2.0);
    CHECK(y[1] == -0.2);
    CHECK(y[2] == 0.0);
}

TEST_CASE("weight norm reparameterization") {
    Rng rng(51);
    ConvLayer layer;
    layer.in_channels = 3;
    layer.out_channels = 4;
    layer.kernel_size = 5;
    layer.v.resize(60);
    for (auto& v : layer.v) v = rng.normal();
    layer.g = {0.7, -1.2, 2.0, 0.01};
    layer.bias.assign(4, 0.0);

    SUBCASE("effective kernel norm equals the gain magnitude") {
        const auto w = models::effective_weights(layer);
        for (std::size_t j = 0; j < 4; ++j) {
            double ss = 0.0;
            for (std::size_t e = 0; e < 15; ++e) ss += w[j * 15 + e] * w[j * 15 + e];
            CHECK(std::abs(std::sqrt(ss) - std::abs(layer.g[j])) < 1e-12);
        }
    }

    SUBCASE("scaling v leaves the effective weights unchanged") {
        const auto w = models::effective_weights(layer);
        ConvLayer scaled = layer;
        for (auto& v : scaled.v) v *= 37.5;
        const auto w2 = models::effective_weights(scaled);
        for (std::size_t e = 0; e < w.size(); ++e) {
            CHECK(w2[e] == doctest::Approx(w[e]).epsilon(1e-12));
        }
    }
}

TEST_CASE("default architecture structure") {
    const auto model = models::init_cnn({}, 7);
    CHECK(model.receptive_field() == 10);
    CHECK(model.parameter_count() == 2609);
    REQUIRE(model.blocks.size() == 3);
    CHECK(model.blocks[0].skip.has_value());
    CHECK(!model.blocks[1].skip.has_value());
    CHECK(!model.blocks[2].skip.has_value());

    SUBCASE("init makes the effective kernel equal v") {
        const auto& conv = model.blocks[0].conv;
        const auto w = models::effective_weights(conv);
        for (std::size_t e = 0; e < w.size(); ++e) {
            CHECK(w[e] == doctest::Approx(conv.v[e]).epsilon(1e-12));
        }
    }
}

TEST_CASE("cnn_forward structural properties") {
    const models::CnnArchitecture arch{6, 3, 4, 16};

    SUBCASE("zero gains and biases give zero output") {
        auto model = models::init_cnn(arch, 3);
        auto params = models::flatten_parameters(model);
        // zero every g and bias, keep v directions
        std::size_t pos = 0;
        const auto zero_layer = [&pos, &params](const ConvLayer& l) {
            pos += l.v.size();
            for (std::size_t e = 0; e < l.g.size() + l.bias.size(); ++e) params[pos + e] = 0.0;
            pos += l.g.size() + l.bias.size();
        };
        zero_layer(model.blocks[0].conv);
        zero_layer(*model.blocks[0].skip);
        zero_layer(model.blocks[1].conv);
        zero_layer(model.blocks[2].conv);
        zero_layer(model.head);
        models::unflatten_parameters(model, params);

        const auto x = random_input(6, 40, 9);
        for (double v : models::cnn_forward(model, x)) CHECK(v == 0.0);
    }

    SUBCASE("causality: future perturbations never reach the past") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const auto model = models::init_cnn(arch, seed);
            auto x = random_input(6, 64, 100 + seed);
            const auto y = models::cnn_forward(model, x);
            const std::size_t t0 = 20;
            x[2][t0] += 5.0;
            x[4][63] -= 3.0;
            const auto y2 = models::cnn_forward(model, x);
            for (std::size_t t = 0; t < t0; ++t) REQUIRE(y2[t] == y[t]);
            CHECK(y2[t0] != y[t0]);
        }
    }

    SUBCASE("translation by more than the receptive field is exact") {
        const auto model = models::init_cnn(arch, 17);
        const auto x = random_input(6, 50, 23);
        const auto y = models::cnn_forward(model, x);

        const std::size_t shift = 25;
        std::vector<std::vector<double>> padded(6, std::vector<double>(50 + shift, 0.0));
        for (std::size_t c = 0; c < 6; ++c) {
            std::copy(x[c].begin(), x[c].end(), padded[c].begin() + shift);
        }
        const auto y2 = models::cnn_forward(model, padded);
        for (std::size_t t = 0; t < y.size(); ++t) REQUIRE(y2[t + shift] == y[t]);
    }

    SUBCASE("input channel permutation is equivalent up to rounding") {
        const auto model = models::init_cnn(arch, 29);
        const auto x = random_input(6, 48, 31);
        const auto y = models::cnn_forward(model, x);

        const std::array<std::size_t, 6> perm = {3, 0, 5, 1, 4, 2};
        std::vector<std::vector<double>> px(6);
        for (std::size_t i = 0; i < 6; ++i) px[i] = x[perm[i]];

        auto permuted = model;
        auto& conv = permuted.blocks[0].conv;
        auto& skip = *permuted.blocks[0].skip;
        for (std::size_t j = 0; j < conv.out_channels; ++j) {
            for (std::size_t i = 0; i < 6; ++i) {
                for (std::size_t s = 0; s < conv.kernel_size; ++s) {
                    conv.v_at(j, i, s) = model.blocks[0].conv.v_at(j, perm[i], s);
                }
                skip.v_at(j, i, 0) = model.blocks[0].skip->v_at(j, perm[i], 0);
            }
        }
        const auto y2 = models::cnn_forward(permuted, px);
        for (std::size_t t = 0; t < y.size(); ++t) {
            CHECK(std::abs(y2[t] - y[t]) <=
                  1e-12 * std::max({std::abs(y[t]), std::abs(y2[t]), 1.0}));
        }
    }
}

TEST_CASE("cnn gradients") {
    const models::CnnArchitecture tiny{3, 2, 3, 4};
    const auto model = models::init_cnn(tiny, 61);
    const auto x = random_input(3, 32, 67);
    std::vector<double> target(32);
    Rng rng(71);
    for (auto& v : target) v = rng.normal();

    SUBCASE("head bias gradient has the closed form") {
        const auto grads = models::cnn_gradients(model, x, target);
        const auto y = models::cnn_forward(model, x);
        double acc = 0.0;
        for (std::size_t t = 0; t < y.size(); ++t) acc += y[t] - target[t];
        acc *= 2.0 / static_cast<double>(y.size());
        CHECK(grads.head.bias[0] == doctest::Approx(acc).epsilon(1e-12));
    }

    SUBCASE("all gradients match central finite differences") {
        const auto grads = models::cnn_gradients(model, x, target);
        const auto analytic = models::flatten_gradients(grads);
        auto params = models::flatten_parameters(model);
        REQUIRE(analytic.size() == params.size());

        const double h = 1e-6;
        auto probe = model;
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto plus = params;
            plus[p] += h;
            models::unflatten_parameters(probe, plus);
            const double lp = mse_from_forward(probe, x, target, 0);
            auto minus = params;
            minus[p] -= h;
            models::unflatten_parameters(probe, minus);
            const double lm = mse_from_forward(probe, x, target, 0);
            const double fd = (lp - lm) / (2.0 * h);
            const double rel =
                std::abs(analytic[p] - fd) / std::max({std::abs(analytic[p]), std::abs(fd), 1e-4});
            if (rel >= 1e-5) {
                CAPTURE(p);
                CAPTURE(analytic[p]);
                CAPTURE(fd);
                REQUIRE(rel < 1e-5);
            }
        }
        CHECK(true);
    }

    SUBCASE("perfect fit gives zero gradients") {
        const auto y = models::cnn_forward(model, x);
        const auto grads = models::cnn_gradients(model, x, y);
        CHECK(grads.loss == 0.0);
        for (double g : models::flatten_gradients(grads)) CHECK(std::abs(g) < 1e-12);
    }

    SUBCASE("masked loss ignores the excluded prefix") {
        // receptive field here is 5, so a t=0 perturbation reaches t <= 4 and
        // a loss starting at t=8 must not move at all
        CHECK(model.receptive_field() == 5);
        auto x2 = x;
        for (auto& ch : x2) ch[0] += 10.0;
        const auto a = models::cnn_gradients(model, x, target, 8);
        const auto b = models::cnn_gradients(model, x2, target, 8);
        CHECK(b.loss == a.loss);
    }
}

TEST_CASE("train_cnn behavior") {
    synth::GeneratorConfig gen;
    gen.duration_s = 25.6;
    gen.noise_std = 0.0;
    gen.seed = 77;
    auto [rec, anns] = synth::generate_recording(gen);
    std::vector<std::string> names(signals::kInputChannels.begin(),
                                   signals::kInputChannels.end());
    names.push_back(signals::kFlowChannel);
    const auto stats = signals::compute_stats({rec}, names);
    const auto scaled = signals::standardize(rec, stats);

    const models::CnnArchitecture arch{6, 3, 4, 16};

    SUBCASE("zero learning rate returns the initial parameters") {
        models::TrainConfig cfg;
        cfg.learning_rate = 0.0;
        cfg.epochs = 3;
        cfg.seed = 5;
        const auto result = models::train_cnn({scaled}, {scaled}, arch, cfg);
        const auto expected = models::init_cnn(arch, mix_seed(5, 3));
        CHECK(models::flatten_parameters(result.model) == models::flatten_parameters(expected));
        CHECK(result.curve.size() == 3);
    }

    SUBCASE("training is deterministic for a fixed seed") {
        models::TrainConfig cfg;
        cfg.epochs = 4;
        cfg.seed = 9;
        const auto a = models::train_cnn({scaled}, {scaled}, arch, cfg);
        const auto b = models::train_cnn({scaled}, {scaled}, arch, cfg);
        CHECK(models::flatten_parameters(a.model) == models::flatten_parameters(b.model));
        CHECK(a.best_epoch == b.best_epoch);
        REQUIRE(a.curve.size() == b.curve.size());
        for (std::size_t e = 0; e < a.curve.size(); ++e) {
            CHECK(a.curve[e].train_mse == b.curve[e].train_mse);
            CHECK(a.curve[e].val_mse == b.curve[e].val_mse);
        }
    }

    SUBCASE("capacity: overfits a short noise-free recording") {
        models::TrainConfig cfg;
        cfg.epochs = 500;
        cfg.seed = 13;
        cfg.learning_rate = 3e-3;
        cfg.windows_per_epoch = 4;
        const auto result = models::train_cnn({scaled}, {scaled}, arch, cfg);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : result.curve) best = std::min(best, e.train_mse);
        CHECK(best < 1e-3);
    }
}

TEST_CASE("model files round trip") {
    SUBCASE("pr model") {
        models::PRModel m;
        m.alpha = 1.0 / 3.0;
        for (int i = 0; i < 6; ++i) {
            m.beta[i] = std::pow(-1.3, i);
            m.gamma[i] = 1.0 / (i + 7.0);
        }
        m.condition_number = 123.456;
        const auto path = temp_file("pr_model.txt");
        models::save_pr(m, path.string(), "unit test model");
        const auto back = models::load_pr(path.string());
        CHECK(back.alpha == m.alpha);
        CHECK(back.beta == m.beta);
        CHECK(back.gamma == m.gamma);
        CHECK(back.condition_number == m.condition_number);
    }

    SUBCASE("cnn model") {
        const auto model = models::init_cnn({}, 99);
        const auto path = temp_file("cnn_model.txt");
        models::save_cnn(model, path.string(), "unit test model");
        const auto back = models::load_cnn(path.string());
        CHECK(models::flatten_parameters(back) == models::flatten_parameters(model));
        CHECK(back.activation_slope == model.activation_slope);

        const auto x = random_input(6, 30, 1);
        const auto y = models::cnn_forward(model, x);
        const auto y2 = models::cnn_forward(back, x);
        for (std::size_t t = 0; t < y.size(); ++t) CHECK(y[t] == y2[t]);
    }

    SUBCASE("loading a non-model file fails cleanly") {
        const auto path = temp_file("not_a_model.txt");
        std::ofstream out(path);
        out << "something else\n";
        out.close();
        CHECK_THROWS_AS(models::load_cnn(path.string()), Error);
        CHECK_THROWS_AS(models::load_pr(path.string()), Error);
    }
}
