// Command-line front end: train/poison/calibrate/detect/evaluate plus the
// transparency sweep and the latency bench. Exit codes: 0 ok, 2 assertion
// failure (--assert), 1 any error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "strip/dataset.hpp"
#include "strip/detector.hpp"
#include "strip/experiment.hpp"
#include "strip/nn.hpp"
#include "strip/pnm.hpp"
#include "strip/rng.hpp"
#include "strip/stats.hpp"
#include "strip/trojan.hpp"

namespace fs = std::filesystem;
using namespace strip;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;  // key=value
    std::uint64_t seed = 0;
    bool seed_set = false;
    int n_perturb = 0;
    std::vector<double> frr;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config file (key=value)");
    if (config_required) c->required();
    cmd->add_option("--out-dir", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--set", opts.overrides, "extra config override key=value (repeatable)");
    cmd->add_option("--seed", opts.seed, "seed override")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_option("--n-perturb", opts.n_perturb, "number of perturbed replicas N");
    cmd->add_option("--frr", opts.frr, "FRR target(s) for calibration");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
    for (const std::string& kv : opts.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed_set) cfg.seed = opts.seed;
    if (opts.n_perturb > 0) cfg.strip.n_perturb = opts.n_perturb;
    if (!opts.frr.empty()) cfg.strip.frr_targets = opts.frr;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

LabeledDataset dataset_from_config(const ExperimentConfig& cfg) {
    if (cfg.dataset_kind == "idx")
        return load_idx(cfg.idx_images, cfg.idx_labels, cfg.dataset_classes);
    if (cfg.dataset_kind == "cifar") return load_cifar_bin(cfg.cifar_paths);
    return synth_generate(cfg.synth_classes, cfg.synth_per_class, cfg.synth_height,
                          cfg.synth_width, cfg.synth_channels, derive_seed(cfg.seed, 0xda7a),
                          cfg.synth_noise);
}

Splits split_from_config(const ExperimentConfig& cfg, const LabeledDataset& full) {
    SplitSpec spec;
    spec.train_fraction = cfg.train_fraction;
    spec.valid_fraction = cfg.valid_fraction;
    spec.heldout_fraction = cfg.heldout_fraction;
    spec.seed = derive_seed(cfg.seed, 0x5611);
    return split(full, spec);
}

TrainConfig train_config_of(const ExperimentConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    // reuse the harness seed streams so CLI stages compose with evaluate
    tc.seed = derive_seed(cfg.seed, 0x7261);
    std::string text = cfg.lr_schedule;
    tc.lr_schedule.clear();
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto colon = tok.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("lr schedule entry needs epoch:rate: " + tok);
        tc.lr_schedule.emplace_back(std::stoi(tok.substr(0, colon)),
                                    std::stod(tok.substr(colon + 1)));
    }
    return tc;
}

Image load_input_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);
    char head[2] = {0, 0};
    is.read(head, 2);
    is.close();
    if (head[0] == 'P') return read_pnm(path);
    // IDX image file: take the first image; label side not needed here
    std::vector<std::uint8_t> bytes;
    {
        std::ifstream raw(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(raw), std::istreambuf_iterator<char>());
    }
    if (bytes.size() < 16) throw std::runtime_error("unrecognized image format: " + path);
    auto be = [&](std::size_t off) {
        return (static_cast<std::uint32_t>(bytes[off]) << 24) |
               (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
               (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
               static_cast<std::uint32_t>(bytes[off + 3]);
    };
    if (be(0) != 0x00000803) throw std::runtime_error("unrecognized image format: " + path);
    std::uint32_t rows = be(8), cols = be(12);
    if (bytes.size() < 16 + static_cast<std::size_t>(rows) * cols)
        throw std::runtime_error("idx image file truncated: " + path);
    std::vector<double> px(static_cast<std::size_t>(rows) * cols);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[16 + i] / 255.0;
    return Image(static_cast<int>(rows), static_cast<int>(cols), 1, std::move(px));
}

int cmd_train(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    LabeledDataset full = dataset_from_config(cfg);
    Splits parts = split_from_config(cfg, full);
    ModelSpec spec = parse_model_spec(cfg.model, full.images.front().height(),
                                      full.images.front().width(),
                                      full.images.front().channels(), full.classes);
    TrainResult res =
        train(Classifier(spec, derive_seed(cfg.seed, 0x1217)), parts.train, train_config_of(cfg));
    double acc = evaluate_accuracy(res.model, parts.valid);
    std::string model_path = (fs::path(cfg.out_dir) / "model_clean.bin").string();
    save_model(res.model, model_path);
    std::printf("trained %s on %zu samples, valid accuracy %s\n", cfg.model.c_str(),
                parts.train.size(), fmt_double(acc).c_str());
    std::printf("checkpoint: %s\n", model_path.c_str());
    std::ostringstream losses;
    for (double l : res.epoch_loss) losses << fmt_double(l) << "\n";
    std::ofstream((fs::path(cfg.out_dir) / "train_loss.txt").string()) << losses.str();
    return 0;
}

int cmd_poison(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    LabeledDataset full = dataset_from_config(cfg);
    Splits parts = split_from_config(cfg, full);

    PoisonSpec spec;
    const Image& shape = full.images.front();
    if (cfg.trigger_kind == "square") {
        Trigger t = make_square_trigger(shape.height(), shape.width(), shape.channels(),
                                        cfg.trigger_size, parse_corner(cfg.trigger_corner),
                                        cfg.trigger_intensity);
        t.transparency = cfg.trigger_transparency;
        spec.triggers.push_back(t);
    } else if (cfg.trigger_kind == "image") {
        spec.triggers.push_back(
            make_image_trigger(read_pnm(cfg.trigger_image), cfg.trigger_transparency));
    } else if (cfg.trigger_kind == "pattern") {
        spec.triggers.push_back(
            make_pattern_trigger(read_pnm(cfg.trigger_image), cfg.trigger_transparency));
    } else {
        for (int d = 0; d < cfg.trigger_digits; ++d)
            spec.triggers.push_back(make_digit_trigger(d, shape.height(), shape.width(),
                                                       shape.channels(), 1,
                                                       cfg.trigger_transparency));
    }
    spec.targets = cfg.targets.size() == spec.triggers.size()
                       ? cfg.targets
                       : std::vector<int>(spec.triggers.size(), cfg.targets.at(0));
    spec.poison_count = cfg.poison_count;
    spec.seed = derive_seed(cfg.seed, 0x2019);
    spec.source_classes = cfg.source_classes;
    spec.entropy_manip_n = std::max(0, cfg.entropy_manip_n);

    LabeledDataset poisoned;
    if (!cfg.source_classes.empty()) {
        spec.non_source_count =
            cfg.non_source_count >= 0 ? cfg.non_source_count : cfg.poison_count;
        poisoned = poison_partial(parts.train, spec);
    } else if (cfg.entropy_manip_n > 0) {
        poisoned = poison_entropy_manip(parts.train, spec);
    } else {
        poisoned = poison(parts.train, spec);
    }

    for (const Trigger& t : spec.triggers) {
        std::string stem = (fs::path(cfg.out_dir) / ("trigger_" + t.id)).string();
        save_trigger(t, stem + (t.pattern.channels() == 3 ? ".ppm" : ".pgm"), stem + ".txt");
    }
    if (shape.channels() == 1) {
        save_idx(poisoned, (fs::path(cfg.out_dir) / "poisoned-images-idx3-ubyte").string(),
                 (fs::path(cfg.out_dir) / "poisoned-labels-idx1-ubyte").string());
    } else {
        save_cifar_bin(poisoned, (fs::path(cfg.out_dir) / "poisoned.bin").string());
    }
    std::printf("poisoned %d of %zu training samples with %zu trigger(s); wrote %s\n",
                cfg.poison_count, parts.train.size(), spec.triggers.size(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_calibrate(const CommonOpts& opts, const std::string& model_path) {
    ExperimentConfig cfg = resolve_config(opts);
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    Classifier model = load_model(model_path);
    LabeledDataset full = dataset_from_config(cfg);
    Splits parts = split_from_config(cfg, full);
    const LabeledDataset& pool = parts.heldout;

    const int calib_n = std::min<int>(cfg.strip.calibration_count, pool.size());
    std::vector<double> entropies;
    std::vector<EntropyRecord> records;
    for (int i = 0; i < calib_n; ++i) {
        PerturbationSet pset =
            perturbation_set(pool.images[i], pool, cfg.strip.n_perturb,
                             derive_seed(cfg.seed, 0xca11 + static_cast<std::uint64_t>(i)));
        double h = input_entropy(model, pset).normalized;
        entropies.push_back(h);
        records.push_back({i, false, h, cfg.strip.n_perturb, cfg.seed});
    }
    write_entropy_csv((fs::path(cfg.out_dir) / "calibration_entropies.csv").string(), records);
    for (double frr_target : cfg.strip.frr_targets) {
        try {
            DetectionBoundary b = calibrate_boundary(entropies, frr_target, cfg.strip.n_perturb);
            std::string name = "boundary_frr" + fmt_double(frr_target) + ".txt";
            write_boundary_file((fs::path(cfg.out_dir) / name).string(), b);
            std::printf("frr %s -> boundary %s (mean %s std %s)\n",
                        fmt_double(frr_target).c_str(), fmt_double(b.threshold).c_str(),
                        fmt_double(b.benign_mean).c_str(), fmt_double(b.benign_std).c_str());
        } catch (const DegenerateBoundary& e) {
            std::printf("frr %s -> degenerate boundary (%s)\n", fmt_double(frr_target).c_str(),
                        e.what());
        }
    }
    DistributionScreen screen = screen_benign_distribution(entropies, full.classes);
    std::printf("benign screen: skew %s kurtosis %s mean %s%s\n",
                fmt_double(screen.skewness).c_str(), fmt_double(screen.kurtosis).c_str(),
                fmt_double(screen.mean).c_str(), screen.fired() ? "  [ABNORMAL]" : "");
    return 0;
}

int cmd_detect(const CommonOpts& opts, const std::string& model_path,
               const std::string& boundary_path, const std::string& image_path) {
    ExperimentConfig cfg = resolve_config(opts);
    Classifier model = load_model(model_path);
    DetectionBoundary boundary = read_boundary_file(boundary_path);
    Image x = load_input_image(image_path);
    LabeledDataset full = dataset_from_config(cfg);
    Splits parts = split_from_config(cfg, full);
    int n = cfg.strip.n_perturb > 0 ? cfg.strip.n_perturb : boundary.n_perturb;
    DetectionResult res =
        detect(model, x, parts.heldout, n, boundary, derive_seed(cfg.seed, 0xdec7));
    std::printf("predicted_label=%d\n", res.predicted_label);
    std::printf("entropy=%s\n", fmt_double(res.entropy.normalized).c_str());
    std::printf("boundary=%s\n", fmt_double(boundary.threshold).c_str());
    std::printf("trojaned=%s\n", res.trojaned ? "yes" : "no");
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, bool with_assert) {
    ExperimentConfig cfg = resolve_config(opts);
    RunReport rep = run_experiment(cfg);
    std::ifstream report_txt(fs::path(cfg.out_dir) / "report.txt");
    std::cout << report_txt.rdbuf();

    if (!with_assert) return 0;
    const AssertSpec& a = cfg.assertions;
    bool ok = true;
    auto fail = [&](const std::string& what) {
        std::printf("ASSERT FAILED: %s\n", what.c_str());
        ok = false;
    };
    if (a.min_attack_success >= 0)
        for (double asr : rep.attack_success)
            if (asr < a.min_attack_success)
                fail("attack success " + fmt_double(asr) + " < " +
                     fmt_double(a.min_attack_success));
    if (a.max_clean_drop >= 0 &&
        rep.clean_accuracy - rep.trojan_clean_accuracy > a.max_clean_drop / 100.0)
        fail("clean-accuracy drop exceeds " + fmt_double(a.max_clean_drop) + " points");
    if (a.max_far >= 0) {
        if (rep.frr_rows.front().degenerate)
            fail("boundary degenerate at frr " +
                 fmt_double(rep.frr_rows.front().frr_target));
        else if (rep.frr_rows.front().empirical_far > a.max_far)
            fail("FAR " + fmt_double(rep.frr_rows.front().empirical_far) + " > " +
                 fmt_double(a.max_far));
    }
    if (a.max_frr >= 0 && !rep.frr_rows.front().degenerate &&
        rep.frr_rows.front().empirical_frr > a.max_frr)
        fail("FRR " + fmt_double(rep.frr_rows.front().empirical_frr) + " > " +
             fmt_double(a.max_frr));
    if (!ok) return 2;
    std::printf("all assertions passed\n");
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::vector<double>& levels) {
    ExperimentConfig cfg = resolve_config(opts);
    std::vector<SweepRow> rows = sweep_transparency(cfg, levels);
    std::printf("transparency  clean_acc  attack_success  boundary  FAR\n");
    for (const SweepRow& r : rows) {
        if (r.degenerate)
            std::printf("%-12s  %-9s  %-14s  (degenerate boundary)\n",
                        fmt_double(r.transparency).c_str(), fmt_double(r.clean_accuracy).c_str(),
                        fmt_double(r.attack_success).c_str());
        else
            std::printf("%-12s  %-9s  %-14s  %-8s  %s\n", fmt_double(r.transparency).c_str(),
                        fmt_double(r.clean_accuracy).c_str(),
                        fmt_double(r.attack_success).c_str(), fmt_double(r.boundary).c_str(),
                        fmt_double(r.far).c_str());
    }
    return 0;
}

int cmd_bench(const CommonOpts& opts, const std::string& model_path, int repetitions) {
    ExperimentConfig cfg = resolve_config(opts);
    cfg.validate();
    LabeledDataset full = dataset_from_config(cfg);
    Splits parts = split_from_config(cfg, full);
    Classifier model = model_path.empty()
                           ? train(Classifier(parse_model_spec(
                                                  cfg.model, full.images.front().height(),
                                                  full.images.front().width(),
                                                  full.images.front().channels(), full.classes),
                                              derive_seed(cfg.seed, 0x1217)),
                                   parts.train, train_config_of(cfg))
                                 .model
                           : load_model(model_path);
    LatencyReport rep = bench_latency(model, parts.valid.images[0], parts.heldout,
                                      cfg.strip.n_perturb, repetitions);
    std::printf("strip %.3f ms, bare %.3f ms, ratio %.2f (N=%d, median of %d)\n", rep.strip_ms,
                rep.bare_ms, rep.ratio, cfg.strip.n_perturb, repetitions);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"STRIP-style trojan-input detection pipeline"};
    app.require_subcommand(1);

    CommonOpts train_opts, poison_opts, calib_opts, detect_opts, eval_opts, sweep_opts,
        bench_opts;
    std::string model_path, boundary_path, image_path, bench_model;
    std::vector<double> sweep_levels{0.9, 0.8, 0.7, 0.6, 0.5};
    bool with_assert = false;
    int bench_reps = 9;

    add_common(app.add_subcommand("train", "train the clean model from a config"), train_opts);
    add_common(app.add_subcommand("poison", "emit triggers and a poisoned training set"),
               poison_opts);

    auto* calib = app.add_subcommand("calibrate", "calibrate detection boundaries from benign "
                                                  "held-out entropies");
    add_common(calib, calib_opts);
    calib->add_option("--model", model_path, "model checkpoint")->required();

    auto* det = app.add_subcommand("detect", "score one input image (PGM/PPM or IDX)");
    add_common(det, detect_opts);
    det->add_option("--model", model_path, "model checkpoint")->required();
    det->add_option("--boundary", boundary_path, "boundary file from calibrate")->required();
    det->add_option("--image", image_path, "input image path")->required();

    auto* ev = app.add_subcommand("evaluate", "full pipeline: train, poison, retrain, "
                                              "calibrate, score");
    add_common(ev, eval_opts);
    ev->add_flag("--assert", with_assert, "exit 2 unless the config's assert.* thresholds hold");

    auto* sw = app.add_subcommand("sweep-transparency", "one full run per transparency level");
    add_common(sw, sweep_opts);
    sw->add_option("--levels", sweep_levels, "transparency levels");

    auto* be = app.add_subcommand("bench", "detection latency vs bare inference");
    add_common(be, bench_opts);
    be->add_option("--model", bench_model, "model checkpoint (trains one when omitted)");
    be->add_option("--repetitions", bench_reps, "timing repetitions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("train")) return cmd_train(train_opts);
        if (app.got_subcommand("poison")) return cmd_poison(poison_opts);
        if (app.got_subcommand("calibrate")) return cmd_calibrate(calib_opts, model_path);
        if (app.got_subcommand("detect"))
            return cmd_detect(detect_opts, model_path, boundary_path, image_path);
        if (app.got_subcommand("evaluate")) return cmd_evaluate(eval_opts, with_assert);
        if (app.got_subcommand("sweep-transparency")) return cmd_sweep(sweep_opts, sweep_levels);
        if (app.got_subcommand("bench")) return cmd_bench(bench_opts, bench_model, bench_reps);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
