// msx: dataset generation, training, evaluation and inference front end.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msx/dataset.hpp"
#include "msx/errors.hpp"
#include "msx/evaluate.hpp"
#include "msx/evms_io.hpp"
#include "msx/inference.hpp"
#include "msx/inspect.hpp"
#include "msx/probe.hpp"
#include "msx/snn/checkpoint.hpp"
#include "msx/snn/train.hpp"

namespace fs = std::filesystem;
using namespace msx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitFormat = 3;

struct Globals {
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string config_path;
    nlohmann::json config = nlohmann::json::object();
};

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) {
        return nlohmann::json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open config " + path, 0);
    }
    try {
        return nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("config: ") + e.what(), e.byte);
    }
}

fs::path report_dir(const std::string& explicit_dir, const fs::path& fallback) {
    return explicit_dir.empty() ? fallback : fs::path(explicit_dir);
}

DatasetManifest load_manifest(const fs::path& data) {
    return read_manifest(data / kManifestFileName);
}

void note(const fs::path& csv) {
    std::cout << "csv: " << csv.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"microsaccade event-camera dataset and spiking classifier toolkit"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "global seed (dataset, split and training)");
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config_path, "JSON config file");

    // generate
    auto* gen = app.add_subcommand("generate", "render, simulate and write a dataset");
    std::string gen_out;
    std::string gen_preset = "desk";
    bool gen_no_resample = false;
    bool gen_left_only = false;
    std::optional<int> gen_b, gen_d, gen_r;
    std::string gen_reports;
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("--preset", gen_preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    gen->add_flag("--no-resample", gen_no_resample, "skip count-overlap resampling");
    gen->add_flag("--left-only", gen_left_only, "do not write mirrored right-eye samples");
    gen->add_option("--base-instances", gen_b, "base trajectories per class");
    gen->add_option("--durations", gen_d, "duration redraws per base trajectory");
    gen->add_option("--resamples", gen_r, "count resamples per rendered sequence");
    gen->add_option("--report-dir", gen_reports, "where CSV reports go (default <out>/reports)");

    // split
    auto* spl = app.add_subcommand("split", "assign train/val/test, grouped by rendered sequence");
    std::string spl_data;
    double spl_val = 0.2;
    int spl_test = 280;
    std::string spl_reports;
    spl->add_option("--data", spl_data, "dataset directory")->required();
    spl->add_option("--val-fraction", spl_val, "validation share per (class, eye) cell");
    spl->add_option("--test-count", spl_test, "total test samples (multiple of 7 x eyes)");
    spl->add_option("--report-dir", spl_reports, "where CSV reports go (default <data>/reports)");

    // inspect
    auto* ins = app.add_subcommand("inspect", "dataset statistics and invariant checks");
    std::string ins_data;
    bool ins_no_verify = false;
    std::string ins_reports;
    ins->add_option("--data", ins_data, "dataset directory")->required();
    ins->add_flag("--no-verify", ins_no_verify, "skip file digest verification");
    ins->add_option("--report-dir", ins_reports, "where CSV reports go (default <data>/reports)");

    // flowcache
    auto* fc = app.add_subcommand("flowcache", "precompute Farneback flow targets");
    std::string fc_data;
    int fc_bins = kDefaultBins;
    double fc_window_us = kDefaultWindowNs / 1000.0;
    fc->add_option("--data", fc_data, "dataset directory")->required();
    fc->add_option("--bins", fc_bins, "time bins T");
    fc->add_option("--window-us", fc_window_us, "binning window in microseconds");

    // train
    auto* tr = app.add_subcommand("train", "train one per-eye model");
    std::string tr_data;
    std::string tr_out;
    std::string tr_eye = "left";
    std::string tr_preset = "vgg16s-flow";
    std::optional<int> tr_epochs, tr_batch;
    std::optional<double> tr_lambda, tr_lr;
    bool tr_shuffle = false;
    bool tr_quiet = false;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--out", tr_out, "run directory")->required();
    tr->add_option("--eye", tr_eye, "left or right")->check(CLI::IsMember({"left", "right"}));
    tr->add_option("--preset", tr_preset, "vgg11s, vgg13s, vgg16s or vgg16s-flow")
        ->check(CLI::IsMember({"vgg11s", "vgg13s", "vgg16s", "vgg16s-flow"}));
    tr->add_option("--epochs", tr_epochs, "epochs");
    tr->add_option("--batch", tr_batch, "batch size");
    tr->add_option("--lambda", tr_lambda, "flow loss weight");
    tr->add_option("--lr", tr_lr, "base learning rate at batch 64");
    tr->add_flag("--shuffle-labels", tr_shuffle, "label-permutation control run");
    tr->add_flag("--quiet", tr_quiet, "no per-epoch progress on stderr");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string ev_ckpt;
    std::string ev_data;
    std::string ev_split = "test";
    std::string ev_reports;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--report-dir", ev_reports, "where CSV reports go (default: checkpoint directory)");

    // probe
    auto* pr = app.add_subcommand("probe", "event-count bias probe before vs after resampling");
    std::string pr_pre;
    std::string pr_post;
    std::string pr_eye;
    std::string pr_reports;
    pr->add_option("--pre", pr_pre, "dataset built with --no-resample");
    pr->add_option("--post", pr_post, "resampled dataset")->required();
    pr->add_option("--eye", pr_eye, "restrict to one eye")->check(CLI::IsMember({"left", "right"}));
    pr->add_option("--report-dir", pr_reports, "where CSV reports go (default <post>/reports)");

    // infer
    auto* inf = app.add_subcommand("infer", "sliding-window classification of a recording");
    std::string inf_ckpt;
    std::string inf_input;
    double inf_window_us = kDefaultWindowNs / 1000.0;
    double inf_stride_us = 0.0;
    double inf_threshold = 0.5;
    std::size_t inf_min_events = 1;
    std::optional<int> inf_width, inf_height;
    std::optional<double> inf_duration_ms;
    std::string inf_reports;
    inf->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required();
    inf->add_option("--input", inf_input, ".evms or t_us,x,y,p .csv recording")->required();
    inf->add_option("--window-us", inf_window_us, "window length");
    inf->add_option("--stride-us", inf_stride_us, "stride (default: window)");
    inf->add_option("--threshold", inf_threshold, "reject below this max probability");
    inf->add_option("--min-events", inf_min_events, "windows with fewer events are rejected unseen");
    inf->add_option("--width", inf_width, "sensor width for csv input");
    inf->add_option("--height", inf_height, "sensor height for csv input");
    inf->add_option("--duration-ms", inf_duration_ms, "recording length (default: through the last event)");
    inf->add_option("--report-dir", inf_reports, "where CSV reports go (default: next to the input)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*seed_opt) {
            g.seed = seed_value;
        }
        g.config = load_config(g.config_path);

        if (*gen) {
            DatasetConfig cfg = gen_preset == "full" ? DatasetConfig::full() : DatasetConfig::desk();
            cfg = dataset_config_from_json(g.config, cfg);
            if (gen_no_resample) {
                cfg.resample = false;
            }
            if (gen_left_only) {
                cfg.right_eye = false;
            }
            if (gen_b) {
                cfg.base_instances = *gen_b;
            }
            if (gen_d) {
                cfg.durations_per_instance = *gen_d;
            }
            if (gen_r) {
                cfg.resamples_per_sequence = *gen_r;
            }
            if (g.seed) {
                cfg.seed = *g.seed;
            }
            cfg.workers = g.workers;
            cfg.validate();
            const DatasetManifest m = build_dataset(cfg, gen_out);
            const InspectReport rep = inspect_dataset(m, gen_out, false, g.workers);
            std::cout << "dataset " << gen_out << "  digest " << m.content_digest() << '\n' << format_inspect_text(rep);
            const fs::path dir = report_dir(gen_reports, fs::path(gen_out) / "reports");
            write_inspect_csv(rep, dir / "generate_stats.csv", dir / "generate_checks.csv");
            note(dir / "generate_stats.csv");
            return rep.ok() ? kExitOk : kExitValidation;
        }

        if (*spl) {
            const DatasetManifest m = load_manifest(spl_data);
            const DatasetManifest out = split_dataset(m, spl_val, spl_test, g.seed.value_or(m.global_seed));
            write_manifest(out, fs::path(spl_data) / kManifestFileName);
            const fs::path dir = report_dir(spl_reports, fs::path(spl_data) / "reports");
            fs::create_directories(dir);
            std::ofstream csv(dir / "split.csv");
            csv << "eye,class,train,val,test\n";
            std::cout << "eye    class  train  val  test\n";
            for (Eye eye : {Eye::Left, Eye::Right}) {
                for (int k = 0; k < kNumClasses; ++k) {
                    int n[4] = {0, 0, 0, 0};
                    for (const SampleRecord& r : out.samples) {
                        if (r.eye == eye && r.class_id == k) {
                            ++n[static_cast<int>(r.split)];
                        }
                    }
                    if (n[1] + n[2] + n[3] == 0) {
                        continue;
                    }
                    csv << to_string(eye) << ',' << k << ',' << n[1] << ',' << n[2] << ',' << n[3] << '\n';
                    std::cout << std::left << std::setw(7) << to_string(eye) << std::right << std::setw(5) << k
                              << std::setw(7) << n[1] << std::setw(5) << n[2] << std::setw(6) << n[3] << '\n';
                }
            }
            note(dir / "split.csv");
            return kExitOk;
        }

        if (*ins) {
            const DatasetManifest m = load_manifest(ins_data);
            const InspectReport rep = inspect_dataset(m, ins_data, !ins_no_verify, g.workers);
            std::cout << format_inspect_text(rep);
            const fs::path dir = report_dir(ins_reports, fs::path(ins_data) / "reports");
            write_inspect_csv(rep, dir / "inspect_stats.csv", dir / "inspect_checks.csv");
            note(dir / "inspect_stats.csv");
            return rep.ok() ? kExitOk : kExitValidation;
        }

        if (*fc) {
            const DatasetManifest m = load_manifest(fc_data);
            snn::ExampleOptions opts;
            opts.bins = fc_bins;
            opts.window_ns = static_cast<std::int64_t>(fc_window_us * 1000.0);
            opts.with_flow = true;
            opts.flow_cache_dir = fs::path(fc_data) / "flowcache";
            opts.workers = g.workers;
            std::vector<const SampleRecord*> all;
            for (const SampleRecord& r : m.samples) {
                all.push_back(&r);
            }
            const auto examples = snn::load_examples(fc_data, all, opts);
            std::cout << "flow targets for " << examples.size() << " samples in " << opts.flow_cache_dir.string() << '\n';
            return kExitOk;
        }

        if (*tr) {
            const DatasetManifest m = load_manifest(tr_data);
            snn::ModelConfig mc = snn::ModelConfig::from_preset(tr_preset, kDefaultBins, m.roi.height, m.roi.width);
            if (g.config.contains("model")) {
                nlohmann::json j = snn::to_json(mc);
                j.merge_patch(g.config["model"]);
                mc = snn::model_config_from_json(j);
            }
            snn::TrainConfig tc = snn::train_config_from_json(g.config.value("train", nlohmann::json::object()));
            if (tr_epochs) {
                tc.epochs = *tr_epochs;
            }
            if (tr_batch) {
                tc.batch_size = *tr_batch;
            }
            if (tr_lr) {
                tc.base_lr = *tr_lr;
            }
            if (tr_lambda) {
                mc.lambda = *tr_lambda;
            }
            if (g.seed) {
                tc.seed = *g.seed;
            }
            tc.shuffle_labels = tc.shuffle_labels || tr_shuffle;
            tc.verbose = !tr_quiet;
            mc.validate();
            tc.validate();
            snn::ExampleOptions opts;
            opts.bins = mc.steps;
            opts.flow_cache_dir = fs::path(tr_data) / "flowcache";
            opts.workers = g.workers;
            const snn::TrainRun run =
                snn::train_on_manifest(mc, tc, m, tr_data, eye_from_string(tr_eye), tr_out, opts);
            std::cout << "epoch  lr          train_loss  val_loss  val_acc\n" << std::fixed;
            for (const auto& r : run.history) {
                std::cout << std::setw(5) << r.epoch << "  " << std::setprecision(6) << std::setw(10) << r.lr << "  "
                          << std::setprecision(4) << std::setw(10) << r.train_loss << "  " << std::setw(8) << r.val_loss
                          << "  " << std::setw(7) << r.val_acc << '\n';
            }
            std::cout << "best epoch " << run.best_epoch << "  val_acc " << run.best_val_acc << '\n';
            std::cout << "checkpoint: " << run.checkpoint.string() << '\n';
            note(run.history_csv);
            return kExitOk;
        }

        if (*ev) {
            const DatasetManifest m = load_manifest(ev_data);
            const EvaluationReport rep = evaluate_checkpoint(ev_ckpt, m, ev_data, split_from_string(ev_split), g.workers);
            std::cout << format_metrics_text(rep.metrics, std::string(to_string(rep.eye)) + " eye, " + ev_split + " split");
            const fs::path dir = report_dir(ev_reports, fs::path(ev_ckpt).parent_path());
            write_metrics_csv(rep.metrics, dir / ("metrics_" + ev_split + ".csv"));
            write_confusion_csv(rep.metrics, dir / ("confusion_" + ev_split + ".csv"));
            write_predictions_csv(rep, dir / ("predictions_" + ev_split + ".csv"));
            note(dir / ("metrics_" + ev_split + ".csv"));
            return kExitOk;
        }

        if (*pr) {
            std::optional<DatasetManifest> pre;
            if (!pr_pre.empty()) {
                pre = load_manifest(pr_pre);
            }
            const DatasetManifest post = load_manifest(pr_post);
            std::optional<Eye> eye;
            if (!pr_eye.empty()) {
                eye = eye_from_string(pr_eye);
            }
            const ProbeReport rep = count_bias_probe(pre, post, eye);
            std::cout << format_probe_text(rep);
            const fs::path dir = report_dir(pr_reports, fs::path(pr_post) / "reports");
            write_probe_csv(rep, dir / "probe.csv");
            note(dir / "probe.csv");
            return kExitOk;
        }

        if (*inf) {
            snn::LoadedCheckpoint ck = snn::load_checkpoint(inf_ckpt);
            const Recording rec = load_recording(inf_input, inf_width, inf_height);
            const snn::ModelConfig& mc = ck.model->config();
            InferenceOptions opts;
            opts.window_ns = static_cast<std::int64_t>(inf_window_us * 1000.0);
            opts.stride_ns = static_cast<std::int64_t>(inf_stride_us * 1000.0);
            opts.threshold = inf_threshold;
            opts.min_events = inf_min_events;
            if (inf_duration_ms) {
                opts.duration_ns = static_cast<std::int64_t>(*inf_duration_ms * 1e6);
            } else if (rec.duration_ns) {
                opts.duration_ns = rec.duration_ns;
            }
            const EventStream fitted = fit_to_geometry(rec.stream, mc.width, mc.height);
            const auto decisions = infer_windows(*ck.model, fitted, opts);
            const InferenceSummary sum = summarize(decisions);
            std::cout << format_inference_text(sum, opts);
            const fs::path dir = report_dir(inf_reports, fs::path(inf_input).parent_path());
            const std::string stem = fs::path(inf_input).stem().string();
            write_decisions_csv(decisions, dir / (stem + "_windows.csv"));
            write_summary_csv(sum, dir / (stem + "_summary.csv"));
            note(dir / (stem + "_summary.csv"));
            return kExitOk;
        }
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const DomainError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const GenerationError& e) {
        std::cerr << "generation error (seed " << e.seed() << "): " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOk;
}
