#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "vsense/dsp.hpp"
#include "vsense/error.hpp"
#include "vsense/segmentation.hpp"
#include "vsense/synthgen.hpp"

using namespace vsense;

namespace {

signals::Recording flow_only(std::vector<double> mdot, double fs = 10.0) {
    signals::Recording rec;
    rec.id = "mem";
    rec.sample_rate_hz = fs;
    rec.add_channel(signals::kFlowChannel, std::move(mdot));
    return rec;
}

double iou(std::size_t a0, std::size_t a1, std::size_t b0, std::size_t b1) {
    const std::size_t lo = std::max(a0, b0), hi = std::min(a1, b1);
    if (hi <= lo) return 0.0;
    const double inter = static_cast<double>(hi - lo);
    const double uni = static_cast<double>((a1 - a0) + (b1 - b0)) - inter;
    return inter / uni;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("canonical templates") {
    const auto filter = dsp::design_butterworth_bandpass(2, 0.1, 0.5, 10.0);
    const auto templates = seg::canonical_templates(121, filter);
    REQUIRE(templates.size() == 4);
    for (const auto& [kind, tmpl] : templates) {
        REQUIRE(tmpl.size() == 121);
        double mean = 0.0, var = 0.0;
        for (double v : tmpl) mean += v;
        mean /= 121.0;
        for (double v : tmpl) var += (v - mean) * (v - mean);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var / 121.0) - 1.0) < 1e-9);
    }
    // each template carries its kind's signature: ramps end on the far level,
    // transients overshoot it and come back
    const auto& rising = templates.at(synth::PatternKind::RisingRamp);
    CHECK(rising.front() < 0.0);
    CHECK(rising.back() > 0.0);
    CHECK(rising.back() > *std::max_element(rising.begin(), rising.end()) - 0.05);
    const auto& descending = templates.at(synth::PatternKind::DescendingRamp);
    CHECK(descending.front() > 0.0);
    CHECK(descending.back() < 0.0);
    const auto& over = templates.at(synth::PatternKind::Overshoot);
    CHECK(*std::max_element(over.begin(), over.end()) > over.back());
    const auto& under = templates.at(synth::PatternKind::Undershoot);
    CHECK(*std::min_element(under.begin(), under.end()) < under.back());
    CHECK_THROWS_AS(seg::canonical_templates(7, filter), Error);
}

TEST_CASE("label_clusters") {
    const std::size_t len = 61;
    const auto templates =
        seg::canonical_templates(len, dsp::design_butterworth_bandpass(2, 0.1, 0.5, 10.0));

    SUBCASE("exact centers match exactly, extras stay other") {
        dtw::Clustering clustering;
        clustering.k = 6;
        clustering.centers.resize(6);
        std::size_t c = 0;
        std::vector<synth::PatternKind> order;
        for (const auto& [kind, tmpl] : templates) {
            clustering.centers[c++] = tmpl;
            order.push_back(kind);
        }
        for (; c < 6; ++c) {
            std::vector<double> sine(len);
            for (std::size_t i = 0; i < len; ++i)
                sine[i] = std::sin(2.0 * M_PI * static_cast<double>(i) / (8.0 + 4.0 * c));
            clustering.centers[c] = sine;
        }
        const auto labels = seg::label_clusters(clustering, templates);
        for (std::size_t i = 0; i < order.size(); ++i) {
            REQUIRE(labels.at(i).has_value());
            CHECK(*labels.at(i) == order[i]);
        }
        CHECK(!labels.at(4).has_value());
        CHECK(!labels.at(5).has_value());
    }

    SUBCASE("single cluster takes its nearest kind") {
        dtw::Clustering clustering;
        clustering.k = 1;
        clustering.centers = {templates.at(synth::PatternKind::RisingRamp)};
        const auto labels = seg::label_clusters(clustering, templates);
        REQUIRE(labels.at(0).has_value());
        CHECK(*labels.at(0) == synth::PatternKind::RisingRamp);
    }

    SUBCASE("equidistant centers resolve to the lower id") {
        dtw::Clustering clustering;
        clustering.k = 2;
        clustering.centers = {templates.at(synth::PatternKind::RisingRamp),
                              templates.at(synth::PatternKind::RisingRamp)};
        const auto labels = seg::label_clusters(clustering, templates);
        REQUIRE(labels.at(0).has_value());
        CHECK(*labels.at(0) == synth::PatternKind::RisingRamp);
        if (labels.at(1)) CHECK(*labels.at(1) != synth::PatternKind::RisingRamp);
    }
}

TEST_CASE("detect_static_states") {
    SUBCASE("constant signal is one full run") {
        const auto rec = flow_only(std::vector<double>(500, 1.3));
        const auto out = seg::detect_static_states(rec, 6.0, 0.02);
        REQUIRE(out.size() == 1);
        CHECK(out[0].kind == synth::PatternKind::StaticState);
        CHECK(out[0].start_idx == 0);
        CHECK(out[0].end_idx == 500);
        CHECK(out[0].cluster_id == seg::kNoCluster);
    }

    SUBCASE("steep ramp has none") {
        std::vector<double> ramp(500);
        for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.1 * static_cast<double>(i);
        CHECK(seg::detect_static_states(flow_only(std::move(ramp)), 6.0, 0.02).empty());
    }

    SUBCASE("excluded spans are cut out") {
        const auto rec = flow_only(std::vector<double>(500, 1.3));
        seg::PatternInstance ramp;
        ramp.kind = synth::PatternKind::RisingRamp;
        ramp.start_idx = 100;
        ramp.end_idx = 200;
        const auto out = seg::detect_static_states(rec, 6.0, 0.02, {ramp});
        REQUIRE(out.size() == 2);
        CHECK(out[0].start_idx == 0);
        CHECK(out[0].end_idx == 100);
        CHECK(out[1].start_idx == 200);
        CHECK(out[1].end_idx == 500);
        CHECK(out[1].id == 1);
    }

    SUBCASE("thresholds must be positive") {
        const auto rec = flow_only(std::vector<double>(500, 1.3));
        CHECK_THROWS_AS(seg::detect_static_states(rec, 0.0, 0.02), Error);
        CHECK_THROWS_AS(seg::detect_static_states(rec, 6.0, -1.0), Error);
    }

    SUBCASE("finds injected static states") {
        synth::GeneratorConfig gen;
        gen.duration_s = 600.0;
        gen.seed = 11;
        const auto [rec, annotations] = synth::generate_recording(gen);
        const auto out = seg::detect_static_states(rec, 6.0, 0.02);
        std::size_t total = 0, hit = 0;
        for (const auto& ann : annotations) {
            if (ann.kind != synth::PatternKind::StaticState) continue;
            ++total;
            for (const auto& inst : out)
                if (iou(ann.start_idx, ann.end_idx, inst.start_idx, inst.end_idx) >= 0.5) {
                    ++hit;
                    break;
                }
        }
        REQUIRE(total >= 2);
        CHECK(static_cast<double>(hit) >= 0.8 * static_cast<double>(total));
    }
}

TEST_CASE("apply_manual_selection") {
    std::vector<seg::PatternInstance> instances(3);
    for (std::size_t i = 0; i < 3; ++i) {
        instances[i].id = i;
        instances[i].kind = synth::PatternKind::RisingRamp;
        instances[i].start_idx = 100 * i;
        instances[i].end_idx = 100 * i + 50;
    }
    const std::string path = "selection_test.txt";

    SUBCASE("empty file keeps everything") {
        write_file(path, "");
        const auto res = seg::apply_manual_selection(instances, path);
        CHECK(res.kept.size() == 3);
        CHECK(res.unknown_ids.empty());
    }

    SUBCASE("drop one") {
        write_file(path, "# reviewed\n1 drop\n2 keep\n");
        const auto res = seg::apply_manual_selection(instances, path);
        REQUIRE(res.kept.size() == 2);
        CHECK(res.kept[0].id == 0);
        CHECK(res.kept[1].id == 2);
    }

    SUBCASE("drop all") {
        write_file(path, "0 drop\n1 drop\n2 drop\n");
        CHECK(seg::apply_manual_selection(instances, path).kept.empty());
    }

    SUBCASE("unknown ids are reported") {
        write_file(path, "7 drop\n");
        const auto res = seg::apply_manual_selection(instances, path);
        CHECK(res.kept.size() == 3);
        REQUIRE(res.unknown_ids.size() == 1);
        CHECK(res.unknown_ids[0] == 7);
    }

    SUBCASE("malformed lines raise") {
        for (const char* bad : {"1 maybe\n", "x keep\n", "1 keep extra\n"}) {
            write_file(path, bad);
            CHECK_THROWS_AS(seg::apply_manual_selection(instances, path), Error);
        }
    }

    std::remove(path.c_str());
}

TEST_CASE("instances file round trip") {
    std::vector<seg::PatternInstance> instances(2);
    instances[0] = {0, synth::PatternKind::Overshoot, 120, 241, "rec_a", 3};
    instances[1] = {1, synth::PatternKind::StaticState, 400, 520, "", seg::kNoCluster};
    const std::string path = "instances_test.txt";
    seg::save_instances(instances, path, "unit");
    const auto loaded = seg::load_instances(path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].id == instances[i].id);
        CHECK(loaded[i].kind == instances[i].kind);
        CHECK(loaded[i].start_idx == instances[i].start_idx);
        CHECK(loaded[i].end_idx == instances[i].end_idx);
        CHECK(loaded[i].recording_id == instances[i].recording_id);
        CHECK(loaded[i].cluster_id == instances[i].cluster_id);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(seg::load_instances("no_such_instances.txt"), Error);
}

TEST_CASE("segment") {
    SUBCASE("contract violations") {
        signals::Recording no_flow;
        no_flow.sample_rate_hz = 10.0;
        no_flow.add_channel("C", std::vector<double>(500, 1.0));
        CHECK_THROWS_AS(seg::segment(no_flow, {}), Error);
        CHECK_THROWS_AS(seg::segment(flow_only(std::vector<double>(100, 1.0)), {}), Error);
    }

    SUBCASE("constant recording yields nothing") {
        CHECK(seg::segment(flow_only(std::vector<double>(2000, 1.5)), {}).empty());
    }

    SUBCASE("deterministic, sorted and non-overlapping on synthetic data") {
        synth::GeneratorConfig gen;
        gen.duration_s = 900.0;
        gen.seed = 5;
        const auto [rec, annotations] = synth::generate_recording(gen);
        seg::SegmentationConfig cfg;
        const auto a = seg::segment(rec, cfg);
        const auto b = seg::segment(rec, cfg);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            CHECK(a[i].kind == b[i].kind);
            CHECK(a[i].start_idx == b[i].start_idx);
            CHECK(a[i].end_idx == b[i].end_idx);
            CHECK(a[i].cluster_id == b[i].cluster_id);
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == i);
            CHECK(a[i].start_idx < a[i].end_idx);
            if (i > 0) CHECK(a[i].start_idx >= a[i - 1].end_idx);
        }
    }

    SUBCASE("recovers injected transients") {
        synth::GeneratorConfig gen;
        gen.duration_s = 1600.0;
        gen.seed = 1;
        const auto [rec, annotations] = synth::generate_recording(gen);
        const auto instances = seg::segment(rec, {});

        const std::array<synth::PatternKind, 4> kinds = {
            synth::PatternKind::RisingRamp, synth::PatternKind::DescendingRamp,
            synth::PatternKind::Overshoot, synth::PatternKind::Undershoot};
        std::size_t ann_total = 0, ann_hit = 0, inst_total = 0, inst_hit = 0;
        for (auto kind : kinds) {
            for (const auto& ann : annotations) {
                if (ann.kind != kind) continue;
                ++ann_total;
                for (const auto& inst : instances)
                    if (inst.kind == kind &&
                        iou(ann.start_idx, ann.end_idx, inst.start_idx, inst.end_idx) >= 0.5) {
                        ++ann_hit;
                        break;
                    }
            }
            for (const auto& inst : instances) {
                if (inst.kind != kind) continue;
                ++inst_total;
                for (const auto& ann : annotations)
                    if (ann.kind == kind &&
                        iou(ann.start_idx, ann.end_idx, inst.start_idx, inst.end_idx) >= 0.5) {
                        ++inst_hit;
                        break;
                    }
            }
        }
        REQUIRE(ann_total >= 40);
        const double recall = static_cast<double>(ann_hit) / static_cast<double>(ann_total);
        const double precision = static_cast<double>(inst_hit) / static_cast<double>(inst_total);
        CHECK(recall >= 0.8);
        CHECK(precision >= 0.8);
    }

    SUBCASE("selection file drops by id") {
        synth::GeneratorConfig gen;
        gen.duration_s = 900.0;
        gen.seed = 5;
        const auto [rec, annotations] = synth::generate_recording(gen);
        seg::SegmentationConfig cfg;
        const auto base = seg::segment(rec, cfg);
        REQUIRE(base.size() >= 2);
        const std::string path = "segment_selection_test.txt";
        write_file(path, std::to_string(base[0].id) + " drop\n");
        cfg.selection_file = path;
        const auto filtered = seg::segment(rec, cfg);
        CHECK(filtered.size() == base.size() - 1);
        for (const auto& inst : filtered) CHECK(inst.id != base[0].id);
        std::remove(path.c_str());
    }
}
