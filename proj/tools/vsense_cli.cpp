#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "vsense/error.hpp"
#include "vsense/harness.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string data_dir;
    std::string output_dir;
    std::string selection_file;
    std::uint64_t seed = 0;
    double duration_s = 0.0;
    std::size_t epochs = 0;
    std::size_t k = 0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual mass-flow sensor toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides ov;
    app.add_option("-c,--config", ov.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    app.add_option("--data-dir", ov.data_dir, "recording and annotation directory");
    app.add_option("--output-dir", ov.output_dir, "artifact directory");
    app.add_option("--seed", ov.seed, "global seed; derives every sub-seed");
    app.add_option("--duration", ov.duration_s, "generated recording length in seconds");
    app.add_option("--epochs", ov.epochs, "training epochs");
    app.add_option("--k", ov.k, "number of DTW k-means clusters");
    app.add_option("--selection", ov.selection_file,
                   "manual keep/drop file applied during segmentation");

    auto* generate = app.add_subcommand("generate", "synthesize a labeled recording");
    auto* segment = app.add_subcommand("segment", "detect and label pattern instances");
    auto* fit_pr = app.add_subcommand("fit-pr", "fit the polynomial regression on the train split");
    auto* train_cnn = app.add_subcommand("train-cnn", "train the causal CNN with best-validation selection");
    auto* evaluate = app.add_subcommand("evaluate", "score both saved models on train and test splits");
    auto* report = app.add_subcommand("report", "write the side-by-side comparison table");
    auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        vsense::harness::RunConfig cfg;
        if (!ov.config_path.empty()) cfg = vsense::harness::load_run_config(ov.config_path);
        if (app.count("--data-dir")) cfg.data_dir = ov.data_dir;
        if (app.count("--output-dir")) cfg.output_dir = ov.output_dir;
        if (app.count("--seed")) cfg.seed = ov.seed;
        if (app.count("--duration")) cfg.generator.duration_s = ov.duration_s;
        if (app.count("--epochs")) cfg.training.epochs = ov.epochs;
        if (app.count("--k")) cfg.segmentation.k = ov.k;
        if (app.count("--selection")) cfg.segmentation.selection_file = ov.selection_file;
        vsense::harness::propagate_seed(cfg);

        if (generate->parsed()) vsense::harness::cmd_generate(cfg);
        if (segment->parsed()) vsense::harness::cmd_segment(cfg);
        if (fit_pr->parsed()) vsense::harness::cmd_fit_pr(cfg);
        if (train_cnn->parsed()) vsense::harness::cmd_train_cnn(cfg);
        if (evaluate->parsed()) vsense::harness::cmd_evaluate(cfg);
        if (report->parsed()) vsense::harness::cmd_report(cfg);
        if (pipeline->parsed()) vsense::harness::cmd_pipeline(cfg);
    } catch (const vsense::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
