#include "vsense/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "vsense/epmetrics.hpp"
#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::harness {

namespace {

namespace fsys = std::filesystem;
using nlohmann::json;

// rolling-std static-state detection; the std ceiling sits above the mdot
// noise floor, the length floor matches the shortest quiet stretch worth
// scoring as a plateau
constexpr double kStaticMinLenS = 6.0;
constexpr double kStaticMaxStd = 0.02;

// sub-stream tag for the dataset split (the modules burn 1..5, 10+, 20
// internally off the same global seed)
constexpr std::uint64_t kSplitStream = 2;

bool verbose() {
    const char* v = std::getenv("VSENSE_VERBOSE");
    return v != nullptr && *v != '\0' && std::string_view(v) != "0";
}

void vlog(const std::string& msg) {
    if (verbose()) std::cerr << "[vsense] " << msg << '\n';
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw Error(ErrorCode::InvalidConfig, where + ": unknown key '" + item.key() + "'");
    }
}

json to_json(const RunConfig& cfg) {
    json mix;
    for (const auto& [kind, weight] : cfg.generator.pattern_mix)
        mix[synth::to_string(kind)] = weight;
    return json{
        {"data_dir", cfg.data_dir},
        {"output_dir", cfg.output_dir},
        {"seed", cfg.seed},
        {"split_ratios", cfg.split_ratios},
        {"generator",
         {{"sample_rate_hz", cfg.generator.sample_rate_hz},
          {"duration_s", cfg.generator.duration_s},
          {"noise_std", cfg.generator.noise_std},
          {"tau_sys_s", cfg.generator.tau_sys_s},
          {"level_min", cfg.generator.level_min},
          {"level_max", cfg.generator.level_max},
          {"pattern_mix", mix}}},
        {"segmentation",
         {{"f_lo_hz", cfg.segmentation.f_lo_hz},
          {"f_hi_hz", cfg.segmentation.f_hi_hz},
          {"peak_prominence", cfg.segmentation.peaks.min_prominence},
          {"peak_min_distance", cfg.segmentation.peaks.min_distance},
          {"half_width", cfg.segmentation.half_width},
          {"k", cfg.segmentation.k},
          {"ball_radius", cfg.segmentation.ball_radius},
          {"selection_file", cfg.segmentation.selection_file}}},
        {"architecture",
         {{"blocks", cfg.architecture.blocks},
          {"kernel_size", cfg.architecture.kernel_size},
          {"channels", cfg.architecture.channels}}},
        {"training",
         {{"learning_rate", cfg.training.learning_rate},
          {"batch_length", cfg.training.batch_length},
          {"epochs", cfg.training.epochs},
          {"windows_per_epoch", cfg.training.windows_per_epoch},
          {"beta1", cfg.training.beta1},
          {"beta2", cfg.training.beta2},
          {"epsilon", cfg.training.epsilon}}},
    };
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

RunConfig from_json(const json& j) {
    RunConfig cfg;
    check_keys(j, "config", {"data_dir", "output_dir", "seed", "split_ratios", "generator",
                             "segmentation", "architecture", "training"});
    read_if(j, "data_dir", cfg.data_dir);
    read_if(j, "output_dir", cfg.output_dir);
    read_if(j, "seed", cfg.seed);
    read_if(j, "split_ratios", cfg.split_ratios);
    if (j.contains("generator")) {
        const json& g = j.at("generator");
        check_keys(g, "generator", {"sample_rate_hz", "duration_s", "noise_std", "tau_sys_s",
                                    "level_min", "level_max", "pattern_mix"});
        read_if(g, "sample_rate_hz", cfg.generator.sample_rate_hz);
        read_if(g, "duration_s", cfg.generator.duration_s);
        read_if(g, "noise_std", cfg.generator.noise_std);
        read_if(g, "tau_sys_s", cfg.generator.tau_sys_s);
        read_if(g, "level_min", cfg.generator.level_min);
        read_if(g, "level_max", cfg.generator.level_max);
        if (g.contains("pattern_mix")) {
            std::map<synth::PatternKind, double> mix;
            for (const auto& item : g.at("pattern_mix").items())
                mix[synth::pattern_kind_from_string(item.key())] = item.value().get<double>();
            cfg.generator.pattern_mix = std::move(mix);
        }
    }
    if (j.contains("segmentation")) {
        const json& s = j.at("segmentation");
        check_keys(s, "segmentation",
                   {"f_lo_hz", "f_hi_hz", "peak_prominence", "peak_min_distance", "half_width",
                    "k", "ball_radius", "selection_file"});
        read_if(s, "f_lo_hz", cfg.segmentation.f_lo_hz);
        read_if(s, "f_hi_hz", cfg.segmentation.f_hi_hz);
        read_if(s, "peak_prominence", cfg.segmentation.peaks.min_prominence);
        read_if(s, "peak_min_distance", cfg.segmentation.peaks.min_distance);
        read_if(s, "half_width", cfg.segmentation.half_width);
        read_if(s, "k", cfg.segmentation.k);
        read_if(s, "ball_radius", cfg.segmentation.ball_radius);
        read_if(s, "selection_file", cfg.segmentation.selection_file);
    }
    if (j.contains("architecture")) {
        const json& a = j.at("architecture");
        check_keys(a, "architecture", {"blocks", "kernel_size", "channels"});
        read_if(a, "blocks", cfg.architecture.blocks);
        read_if(a, "kernel_size", cfg.architecture.kernel_size);
        read_if(a, "channels", cfg.architecture.channels);
    }
    if (j.contains("training")) {
        const json& t = j.at("training");
        check_keys(t, "training", {"learning_rate", "batch_length", "epochs",
                                   "windows_per_epoch", "beta1", "beta2", "epsilon"});
        read_if(t, "learning_rate", cfg.training.learning_rate);
        read_if(t, "batch_length", cfg.training.batch_length);
        read_if(t, "epochs", cfg.training.epochs);
        read_if(t, "windows_per_epoch", cfg.training.windows_per_epoch);
        read_if(t, "beta1", cfg.training.beta1);
        read_if(t, "beta2", cfg.training.beta2);
        read_if(t, "epsilon", cfg.training.epsilon);
    }
    propagate_seed(cfg);
    return cfg;
}

std::string recording_path(const RunConfig& cfg) { return cfg.data_dir + "/recording.csv"; }
std::string annotations_path(const RunConfig& cfg) { return cfg.data_dir + "/annotations.txt"; }
std::string out_path(const RunConfig& cfg, const std::string& name) {
    return cfg.output_dir + "/" + name;
}

/// Echoes the effective config into the output directory; called by every
/// stage so any artifact can be traced back to the exact run settings.
void prepare_output(const RunConfig& cfg) {
    fsys::create_directories(cfg.output_dir);
    save_run_config(cfg, out_path(cfg, "effective_config.json"));
}

signals::Recording load_data(const RunConfig& cfg) {
    const std::string path = recording_path(cfg);
    if (!fsys::exists(path))
        throw Error(ErrorCode::IoError, "missing " + path + "; run generate first");
    return signals::load_recording(path);
}

signals::DatasetSplit make_split(const RunConfig& cfg, const signals::Recording& rec) {
    return signals::split_dataset({rec}, cfg.split_ratios, mix_seed(cfg.seed, kSplitStream));
}

signals::ChannelStats input_stats(const signals::DatasetSplit& split) {
    const std::vector<std::string> names(signals::kInputChannels.begin(),
                                         signals::kInputChannels.end());
    return signals::compute_stats(split.train, names);
}

/// Standardizes the input channels with the train-split stats; mdot keeps its
/// physical units so model scores stay in flow units.
signals::Recording scale_for_model(const signals::Recording& rec, signals::ChannelStats stats) {
    stats.by_channel[signals::kFlowChannel] = {0.0, 1.0};
    return signals::standardize(rec, stats);
}

std::vector<std::array<double, 6>> pr_rows(const signals::Recording& rec) {
    const auto x = models::input_matrix(rec);
    std::vector<std::array<double, 6>> rows(rec.length());
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < 6; ++c) rows[t][c] = x[c][t];
    return rows;
}

std::map<synth::PatternKind, std::size_t> count_kinds(
    const std::vector<seg::PatternInstance>& instances) {
    std::map<synth::PatternKind, std::size_t> counts;
    for (const auto& inst : instances) ++counts[inst.kind];
    return counts;
}

std::string kind_summary(const std::map<synth::PatternKind, std::size_t>& counts) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [kind, count] : counts) {
        if (!first) os << ", ";
        os << count << " " << synth::to_string(kind);
        first = false;
    }
    return first ? "none" : os.str();
}

void write_cluster_csv(const seg::ClusterTrace& trace, std::size_t cluster,
                       const std::string& path, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << "# " << header << "\n";
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < trace.windows.size(); ++i)
        if (trace.assignment[i] == cluster) members.push_back(i);
    const auto& label = trace.labels[cluster];
    out << "# cluster " << cluster << " label " << (label ? synth::to_string(*label) : "other")
        << " members " << members.size() << "\n";
    out << "sample,center";
    for (std::size_t m : members) out << ",w" << trace.starts[m];
    out << "\n";
    for (std::size_t t = 0; t < trace.centers[cluster].size(); ++t) {
        out << t << "," << fmt(trace.centers[cluster][t]);
        for (std::size_t m : members) out << "," << fmt(trace.windows[m][t]);
        out << "\n";
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

struct SplitEval {
    std::vector<double> truth;
    std::vector<double> pred_pr;
    std::vector<double> pred_cnn;
    std::vector<seg::PatternInstance> patterns;  // indices into the concatenation
    double sample_rate_hz = 0.0;
};

SplitEval eval_split(const std::vector<signals::Recording>& recs, const RunConfig& cfg,
                     const signals::ChannelStats& stats, const models::PRModel& pr,
                     const models::CnnModel& cnn) {
    SplitEval ev;
    std::size_t offset = 0;
    std::size_t next_id = 0;
    for (const auto& rec : recs) {
        ev.sample_rate_hz = rec.sample_rate_hz;
        const auto scaled = scale_for_model(rec, stats);
        const auto& truth = rec.channel(signals::kFlowChannel);
        ev.truth.insert(ev.truth.end(), truth.begin(), truth.end());
        const auto p = models::predict_pr(pr, pr_rows(scaled));
        ev.pred_pr.insert(ev.pred_pr.end(), p.begin(), p.end());
        const auto c = models::cnn_forward(cnn, models::input_matrix(scaled));
        ev.pred_cnn.insert(ev.pred_cnn.end(), c.begin(), c.end());
        for (auto inst : detect_instances(rec, cfg)) {
            inst.id = next_id++;
            inst.start_idx += offset;
            inst.end_idx += offset;
            ev.patterns.push_back(inst);
        }
        offset += rec.length();
    }
    return ev;
}

struct ReportSummary {
    double mse = 0.0;
    std::map<std::string, double> q90;
};

ReportSummary read_report_summary(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "missing report " + path + "; run evaluate first");
    ReportSummary summary;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "mse") {
            ls >> summary.mse;
        } else if (tag == "metric") {
            std::string name, count_word, q90_word;
            std::size_t count = 0;
            double q90 = 0.0;
            if (ls >> name >> count_word >> count >> q90_word >> q90)
                summary.q90[name] = q90;
        }
    }
    return summary;
}

}  // namespace

void propagate_seed(RunConfig& cfg) {
    cfg.generator.seed = cfg.seed;
    cfg.segmentation.seed = cfg.seed;
    cfg.training.seed = cfg.seed;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
    }
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << "// " << provenance(cfg) << "\n" << to_json(cfg).dump(2) << "\n";
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance(const RunConfig& cfg) {
    return "config " + config_hash(cfg) + " seed " + std::to_string(cfg.seed);
}

std::vector<seg::PatternInstance> detect_instances(const signals::Recording& rec,
                                                   const RunConfig& cfg,
                                                   seg::ClusterTrace* trace) {
    auto instances = seg::segment(rec, cfg.segmentation, trace);
    const auto statics =
        seg::detect_static_states(rec, kStaticMinLenS, kStaticMaxStd, instances);
    std::size_t next_id = instances.empty() ? 0 : instances.back().id + 1;
    for (auto inst : statics) {
        inst.id = next_id++;
        instances.push_back(inst);
    }
    std::sort(instances.begin(), instances.end(),
              [](const seg::PatternInstance& a, const seg::PatternInstance& b) {
                  return a.start_idx != b.start_idx ? a.start_idx < b.start_idx : a.id < b.id;
              });
    return instances;
}

void cmd_generate(const RunConfig& cfg) {
    const auto [rec, annotations] = synth::generate_recording(cfg.generator);
    fsys::create_directories(cfg.data_dir);
    const std::string prov = provenance(cfg);
    signals::save_recording(rec, recording_path(cfg), prov);
    synth::save_annotations(annotations, annotations_path(cfg), prov);
    prepare_output(cfg);
    std::map<synth::PatternKind, std::size_t> counts;
    for (const auto& ann : annotations) ++counts[ann.kind];
    std::cout << "generated " << rec.length() << " samples at " << rec.sample_rate_hz
              << " Hz -> " << recording_path(cfg) << "\n"
              << "annotations: " << kind_summary(counts) << " -> " << annotations_path(cfg)
              << "\n";
}

void cmd_segment(const RunConfig& cfg) {
    const auto rec = load_data(cfg);
    const auto split = make_split(cfg, rec);
    prepare_output(cfg);
    const std::string prov = provenance(cfg);
    const std::pair<const char*, const std::vector<signals::Recording>*> parts[] = {
        {"train", &split.train}, {"test", &split.test}};
    for (const auto& [name, recs] : parts) {
        std::vector<seg::PatternInstance> merged;
        std::size_t next_id = 0;
        for (std::size_t r = 0; r < recs->size(); ++r) {
            seg::ClusterTrace trace;
            auto instances = detect_instances((*recs)[r], cfg, &trace);
            for (auto inst : instances) {
                inst.id += next_id;
                merged.push_back(inst);
            }
            if (!instances.empty()) next_id = merged.back().id + 1;
            const std::string tag =
                recs->size() > 1 ? std::string("_r") + std::to_string(r) : std::string();
            for (std::size_t c = 0; c < trace.centers.size(); ++c) {
                write_cluster_csv(trace, c,
                                  out_path(cfg, "clusters_" + std::string(name) + tag + "_c" +
                                                    std::to_string(c) + ".csv"),
                                  prov);
            }
        }
        seg::save_instances(merged, out_path(cfg, "instances_" + std::string(name) + ".txt"),
                            prov);
        std::cout << name << ": " << merged.size() << " instances ("
                  << kind_summary(count_kinds(merged)) << ")\n";
    }
}

void cmd_fit_pr(const RunConfig& cfg) {
    const auto rec = load_data(cfg);
    const auto split = make_split(cfg, rec);
    prepare_output(cfg);
    const auto stats = input_stats(split);
    const std::string prov = provenance(cfg);
    signals::save_stats(stats, out_path(cfg, "stats.txt"), prov);
    std::vector<std::array<double, 6>> inputs;
    std::vector<double> targets;
    for (const auto& r : split.train) {
        const auto rows = pr_rows(scale_for_model(r, stats));
        inputs.insert(inputs.end(), rows.begin(), rows.end());
        const auto& mdot = r.channel(signals::kFlowChannel);
        targets.insert(targets.end(), mdot.begin(), mdot.end());
    }
    const auto model = models::fit_pr(inputs, targets);
    models::save_pr(model, out_path(cfg, "pr_model.txt"), prov);
    std::cout << "fit PR on " << inputs.size() << " samples; condition number "
              << fmt(model.condition_number) << " -> " << out_path(cfg, "pr_model.txt") << "\n";
}

void cmd_train_cnn(const RunConfig& cfg) {
    const auto rec = load_data(cfg);
    const auto split = make_split(cfg, rec);
    prepare_output(cfg);
    const auto stats = input_stats(split);
    const std::string prov = provenance(cfg);
    signals::save_stats(stats, out_path(cfg, "stats.txt"), prov);
    std::vector<signals::Recording> train, validation;
    for (const auto& r : split.train) train.push_back(scale_for_model(r, stats));
    for (const auto& r : split.validation) validation.push_back(scale_for_model(r, stats));
    vlog("training on " + std::to_string(train.size()) + " recording(s)");
    const auto result = models::train_cnn(train, validation, cfg.architecture, cfg.training);
    models::save_cnn(result.model, out_path(cfg, "cnn_model.txt"), prov);
    const std::string curve_path = out_path(cfg, "train_curve.csv");
    std::ofstream curve(curve_path);
    if (!curve) throw Error(ErrorCode::IoError, "cannot write " + curve_path);
    curve << "# " << prov << "\nepoch,train_mse,val_mse\n";
    for (std::size_t e = 0; e < result.curve.size(); ++e)
        curve << e << "," << fmt(result.curve[e].train_mse) << ","
              << fmt(result.curve[e].val_mse) << "\n";
    if (!curve) throw Error(ErrorCode::IoError, "failed writing " + curve_path);
    std::cout << "trained " << result.curve.size() << " epochs; best epoch "
              << result.best_epoch << " (val mse "
              << fmt(result.curve[result.best_epoch].val_mse) << ") -> "
              << out_path(cfg, "cnn_model.txt") << "\n";
}

void cmd_evaluate(const RunConfig& cfg) {
    const auto rec = load_data(cfg);
    const auto split = make_split(cfg, rec);
    prepare_output(cfg);
    const auto stats = input_stats(split);
    for (const char* name : {"pr_model.txt", "cnn_model.txt"}) {
        if (!fsys::exists(out_path(cfg, name)))
            throw Error(ErrorCode::IoError,
                        "missing " + out_path(cfg, name) + "; run fit-pr and train-cnn first");
    }
    const auto pr = models::load_pr(out_path(cfg, "pr_model.txt"));
    const auto cnn = models::load_cnn(out_path(cfg, "cnn_model.txt"));
    const std::string prov = provenance(cfg);
    const std::pair<const char*, const std::vector<signals::Recording>*> parts[] = {
        {"train", &split.train}, {"test", &split.test}};
    for (const auto& [split_name, recs] : parts) {
        const auto ev = eval_split(*recs, cfg, stats, pr, cnn);
        const std::pair<const char*, const std::vector<double>*> preds[] = {
            {"pr", &ev.pred_pr}, {"cnn", &ev.pred_cnn}};
        for (const auto& [model_name, pred] : preds) {
            const auto report = ep::build_report(*pred, ev.truth, ev.patterns,
                                                 ev.sample_rate_hz);
            const std::string stem = std::string(model_name) + "_" + split_name;
            ep::save_report(report, out_path(cfg, "report_" + stem + ".txt"), prov);
            ep::save_metric_csv(report, out_path(cfg, "metrics_" + stem + ".csv"), prov);
            std::cout << model_name << " " << split_name << " mse " << fmt(report.mse) << "\n";
        }
    }
}

void cmd_report(const RunConfig& cfg) {
    prepare_output(cfg);
    const ReportSummary pr_train = read_report_summary(out_path(cfg, "report_pr_train.txt"));
    const ReportSummary pr_test = read_report_summary(out_path(cfg, "report_pr_test.txt"));
    const ReportSummary cnn_train = read_report_summary(out_path(cfg, "report_cnn_train.txt"));
    const ReportSummary cnn_test = read_report_summary(out_path(cfg, "report_cnn_test.txt"));
    const ReportSummary* columns[] = {&pr_train, &pr_test, &cnn_train, &cnn_test};

    std::ostringstream table;
    table << "metric";
    for (const char* col : {"pr_train", "pr_test", "cnn_train", "cnn_test"})
        table << " " << col;
    table << "\n";
    const char* metrics[] = {"MSE", "E_abs", "E_rel", "dt80", "dt10", "dt_conv", "dt_peak"};
    for (const char* metric : metrics) {
        table << metric;
        for (const ReportSummary* col : columns) {
            const double value =
                std::string_view(metric) == "MSE"
                    ? col->mse
                    : (col->q90.count(metric) ? col->q90.at(metric)
                                              : std::numeric_limits<double>::quiet_NaN());
            table << " " << fmt(value);
        }
        table << "\n";
    }

    const std::string path = out_path(cfg, "comparison.txt");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << "# " << provenance(cfg) << "\n"
        << "# rows: global MSE, then 90th-percentile pattern metrics\n"
        << table.str();
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
    std::cout << table.str();
}

void cmd_pipeline(const RunConfig& cfg) {
    const std::pair<const char*, void (*)(const RunConfig&)> stages[] = {
        {"segment", cmd_segment},     {"fit-pr", cmd_fit_pr}, {"train-cnn", cmd_train_cnn},
        {"evaluate", cmd_evaluate},   {"report", cmd_report},
    };
    if (!fsys::exists(recording_path(cfg))) {
        vlog("no recording found, generating");
        cmd_generate(cfg);
    }
    for (const auto& [name, stage] : stages) {
        vlog(std::string("stage ") + name);
        try {
            stage(cfg);
        } catch (...) {
            std::cerr << "pipeline stopped in stage '" << name << "'; artifacts in "
                      << cfg.output_dir << " are partial\n";
            throw;
        }
    }
    std::cout << "pipeline complete; artifacts in " << cfg.output_dir << "\n";
}

}  // namespace vsense::harness
