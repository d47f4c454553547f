// Command-line front end: synth, assign, train, infer, eval, sweep, gradcheck.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcdet/config.hpp"
#include "bcdet/gradient_suite.hpp"
#include "bcdet/io.hpp"
#include "bcdet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bcdet;
using nlohmann::json;

namespace {

fs::path sibling(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

json targets_json(const VideoAnnotation& video, const PipelineConfig& cfg, const LabelSpace& labels) {
    PyramidConfig pc;
    pc.num_levels = cfg.num_levels;
    pc.scale_factor = cfg.scale_factor;
    pc.base_length = static_cast<int>(std::ceil(video.duration_seconds * video.frame_rate - 1e-9));
    pc.frame_rate = video.frame_rate;
    const auto locations = pyramid_locations(pc);
    const auto segments = segments_in_frames(video);
    const LocationTargets t = assign_targets(locations, segments, labels, cfg.alpha);

    json levels = json::array();
    for (int l = 0; l < pc.num_levels; ++l) levels.push_back({{"level", l}, {"stride", pc.stride(l)}, {"locations", json::array()}});
    for (std::size_t i = 0; i < locations.size(); ++i) {
        const auto& loc = locations[i];
        const auto k = static_cast<Eigen::Index>(i);
        json e{{"index", loc.index}, {"t", loc.t}, {"p_s", t.p_s(k)}, {"p_e", t.p_e(k)}, {"positive", t.is_positive[i] != 0}};
        if (t.is_positive[i]) {
            e["r_s"] = t.r_s(k);
            e["r_e"] = t.r_e(k);
            std::vector<int> classes;
            for (Eigen::Index r = 0; r < t.class_targets.rows(); ++r)
                if (t.class_targets(r, k) > 0.5) classes.push_back(static_cast<int>(r));
            e["classes"] = classes;
        }
        levels[static_cast<std::size_t>(loc.level)]["locations"].push_back(std::move(e));
    }
    return {{"id", video.id}, {"num_positive", t.num_positive()}, {"levels", std::move(levels)}};
}

struct EvalOutputs {
    EvalReport report;
};

void write_eval_outputs(const fs::path& out, const EvalReport& report, const std::string& provenance) {
    write_file_atomic(out, report_to_json(report).dump(2) + "\n");
    write_file_atomic(sibling(out, ".map.csv"), map_table_csv({{"detections", report}}));
    write_file_atomic(sibling(out, ".per_class.csv"), per_class_csv(report));
    if (!report.curves.budgets.empty()) {
        write_file_atomic(sibling(out, ".curves.csv"), curves_csv(report.curves));
        write_file_atomic(sibling(out, ".curves.svg"), curves_svg(report.curves, provenance));
    }
    if (!report.length_groups.empty()) write_file_atomic(sibling(out, ".length_groups.csv"), length_groups_csv(report.length_groups));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-confidence temporal action detection toolkit"};
    app.require_subcommand(1);

    std::string config_path;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset (annotations + feature pyramids)");
    std::string synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Override synth.seed");

    // assign
    auto* assign = app.add_subcommand("assign", "Dump per-location training targets");
    std::string assign_ann, assign_out;
    assign->add_option("--annotations", assign_ann, "Annotation JSON")->required()->check(CLI::ExistingFile);
    assign->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    assign->add_option("--out", assign_out, "Output JSON")->required();

    // train
    auto* train = app.add_subcommand("train", "Train the heads on a dataset directory");
    std::string train_data, train_out, train_trace;
    train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "Checkpoint path")->required();
    train->add_option("--trace", train_trace, "Loss trace CSV");

    // infer
    auto* inf = app.add_subcommand("infer", "Decode detections with a checkpoint");
    std::string infer_data, infer_ckpt, infer_out, infer_fusion;
    std::optional<double> infer_sigma;
    std::optional<int> infer_topv, infer_topn;
    inf->add_option("--data", infer_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    inf->add_option("--ckpt", infer_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    inf->add_option("--out", infer_out, "Detections JSON")->required();
    inf->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    inf->add_option("--fusion", infer_fusion, "Score fusion mode");
    inf->add_option("--sigma", infer_sigma, "Confidence scaling sigma");
    inf->add_option("--topv", infer_topv, "Top-v verbs");
    inf->add_option("--topn", infer_topn, "Top-n nouns");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate detections against annotations");
    std::string eval_dets, eval_ann, eval_thresholds, eval_out;
    bool eval_curves = false, eval_groups = false;
    ev->add_option("--detections", eval_dets, "Detections JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--annotations", eval_ann, "Annotation JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--thresholds", eval_thresholds, "Comma-separated tIoU thresholds");
    ev->add_option("--out", eval_out, "Report JSON")->required();
    ev->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    ev->add_flag("--curves", eval_curves, "Boundary-error curves (CSV + SVG)");
    ev->add_flag("--length-groups", eval_groups, "Length-stratified mAP");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Infer + eval over a parameter grid");
    std::string sweep_param, sweep_values, sweep_data, sweep_ckpt, sweep_out, sweep_thresholds;
    sweep->add_option("--param", sweep_param, "sigma | fusion | topvn")->required()->check(CLI::IsMember({"sigma", "fusion", "topvn"}));
    sweep->add_option("--values", sweep_values, "Grid: numbers, fusion names, or v:n pairs (comma-separated)");
    sweep->add_option("--data", sweep_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--ckpt", sweep_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out, "Combined CSV")->required();
    sweep->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    sweep->add_option("--thresholds", sweep_thresholds, "Comma-separated tIoU thresholds");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::uint64_t gc_seed = 0;
    int gc_instances = 100;
    double gc_eps = 1e-5;
    gc->add_option("--seed", gc_seed, "First instance seed");
    gc->add_option("--instances", gc_instances, "Number of random instances")->check(CLI::PositiveNumber);
    gc->add_option("--eps", gc_eps, "Perturbation")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = load_config(config_path);

        if (synth->parsed()) {
            if (synth_seed) cfg.synth.seed = *synth_seed;
            const SynthDataset ds = generate_dataset(cfg.synth);
            write_dataset(synth_out, ds);
            std::size_t segments = 0;
            for (const auto& s : ds.sequences) segments += s.segments.size();
            std::printf("wrote %zu sequences, %zu segments to %s\n", ds.sequences.size(), segments, synth_out.c_str());
        } else if (assign->parsed()) {
            const AnnotationSet set = read_annotations(assign_ann);
            json videos = json::array();
            for (const auto& v : set.videos) videos.push_back(targets_json(v, cfg, set.labels));
            write_file_atomic(assign_out, json{{"alpha", cfg.alpha}, {"videos", std::move(videos)}}.dump(1) + "\n");
        } else if (train->parsed()) {
            const LoadedData data = load_data(train_data, cfg);
            const TrainResult result = train_model(data, cfg, [&](int step, const LossBreakdown& l) {
                if (step == 1 || step % 50 == 0 || step == cfg.train.steps)
                    std::fprintf(stderr, "step %4d  total %.5f  cls %.5f  giou %.5f  conf %.5f/%.5f  T=%zu\n", step,
                                 l.total, l.l_cls, l.l_giou, l.l_conf_s, l.l_conf_e, l.num_conf);
            });
            write_checkpoint(train_out, result.weights);
            if (!train_trace.empty()) write_file_atomic(train_trace, trace_csv(result.trace));
        } else if (inf->parsed()) {
            HeadWeights<double> w = read_checkpoint(infer_ckpt);
            if (!infer_fusion.empty()) cfg.decode.fusion = parse_fusion_mode(infer_fusion);
            if (infer_sigma) {
                if (!(*infer_sigma > 0.0)) throw std::invalid_argument("--sigma must be positive");
                w.config.sigma = *infer_sigma;
            }
            if (infer_topv) cfg.decode.top_v = *infer_topv;
            if (infer_topn) cfg.decode.top_n = *infer_topn;
            const LoadedData data = load_data(infer_data, cfg);
            write_detections(infer_out, infer(w, data, cfg.decode));
        } else if (ev->parsed()) {
            const std::vector<double> thresholds = eval_thresholds.empty() ? cfg.thresholds : parse_number_list(eval_thresholds);
            const std::vector<Detection> dets = read_detections(eval_dets);
            const AnnotationSet set = read_annotations(eval_ann);
            const EvalReport report = evaluate(dets, set, thresholds, cfg.error_budgets, eval_curves, eval_groups);
            write_eval_outputs(eval_out, report, "bcdet eval detections=" + fs::path(eval_dets).filename().string() +
                                                     " annotations=" + fs::path(eval_ann).filename().string());
            std::printf("average mAP %.4f\n", report.average_map);
        } else if (sweep->parsed()) {
            const std::vector<double> thresholds = sweep_thresholds.empty() ? cfg.thresholds : parse_number_list(sweep_thresholds);
            const HeadWeights<double> base = read_checkpoint(sweep_ckpt);
            const LoadedData data = load_data(sweep_data, cfg);
            std::vector<std::pair<std::string, EvalReport>> rows;
            const auto run = [&](const std::string& name, const HeadWeights<double>& w, const DecodeConfig& d) {
                const std::vector<Detection> dets = flatten(infer(w, data, d));
                rows.emplace_back(name, evaluate(dets, data.annotations, thresholds, {}, false, false));
                std::fprintf(stderr, "%s: average mAP %.4f\n", name.c_str(), rows.back().second.average_map);
            };
            if (sweep_param == "sigma") {
                const std::vector<double> values =
                    sweep_values.empty() ? std::vector<double>{4.0, 4.5, 5.0, 5.5, 6.0} : parse_number_list(sweep_values);
                for (double s : values) {
                    if (!(s > 0.0)) throw std::invalid_argument("sigma values must be positive");
                    HeadWeights<double> w = base;
                    w.config.sigma = s;
                    char name[32];
                    std::snprintf(name, sizeof name, "sigma=%g", s);
                    run(name, w, cfg.decode);
                }
            } else if (sweep_param == "fusion") {
                std::vector<FusionMode> modes(kAllFusionModes.begin(), kAllFusionModes.end());
                if (!sweep_values.empty()) {
                    modes.clear();
                    std::stringstream ss(sweep_values);
                    for (std::string item; std::getline(ss, item, ',');) modes.push_back(parse_fusion_mode(item));
                }
                for (FusionMode m : modes) {
                    DecodeConfig d = cfg.decode;
                    d.fusion = m;
                    run(std::string(to_string(m)), base, d);
                }
            } else {
                const std::string grid = sweep_values.empty() ? "1:3,3:9,5:15,10:30" : sweep_values;
                std::stringstream ss(grid);
                for (std::string item; std::getline(ss, item, ',');) {
                    const auto colon = item.find(':');
                    if (colon == std::string::npos) throw std::invalid_argument("topvn values must look like v:n");
                    DecodeConfig d = cfg.decode;
                    d.top_v = std::stoi(item.substr(0, colon));
                    d.top_n = std::stoi(item.substr(colon + 1));
                    run("v=" + std::to_string(d.top_v) + " n=" + std::to_string(d.top_n), base, d);
                }
            }
            write_file_atomic(sweep_out, map_table_csv(rows));
        } else if (gc->parsed()) {
            GradientCheckOptions opts;
            opts.eps = gc_eps;
            const GradientSuiteResult r = run_gradient_suite(gc_seed, gc_instances, cfg.loss, opts);
            std::printf("instances %d (with confidence terms %d)  worst relative error %.3e (seed %llu)\n", r.instances,
                        r.instances_with_conf, r.worst, static_cast<unsigned long long>(r.worst_seed));
            return r.worst < 1e-4 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
