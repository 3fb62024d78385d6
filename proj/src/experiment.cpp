#include "strip/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strip/pnm.hpp"
#include "strip/rng.hpp"
#include "strip/stats.hpp"

namespace strip {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string join_list(const std::vector<std::string>& items, char sep) {
    std::string out;
    for (const std::string& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (const std::string& tok : split_list(text, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (const std::string& tok : split_list(text, ',')) out.push_back(std::stod(tok));
    return out;
}

std::string int_list_to_text(const std::vector<int>& v) {
    std::vector<std::string> parts;
    for (int x : v) parts.push_back(std::to_string(x));
    return join_list(parts, ',');
}

std::string double_list_to_text(const std::vector<double>& v) {
    std::vector<std::string> parts;
    for (double x : v) parts.push_back(fmt_double(x));
    return join_list(parts, ',');
}

std::vector<std::pair<int, double>> parse_schedule(const std::string& text) {
    std::vector<std::pair<int, double>> out;
    for (const std::string& tok : split_list(text, ',')) {
        auto colon = tok.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("lr schedule entry needs epoch:rate, got: " + tok);
        out.emplace_back(std::stoi(tok.substr(0, colon)), std::stod(tok.substr(colon + 1)));
    }
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset_kind != "synth" && dataset_kind != "idx" && dataset_kind != "cifar")
        throw std::invalid_argument("config: dataset_kind must be synth|idx|cifar");
    if (dataset_kind == "idx" && (idx_images.empty() || idx_labels.empty()))
        throw std::invalid_argument("config: idx dataset needs idx_images and idx_labels");
    if (dataset_kind == "cifar" && cifar_paths.empty())
        throw std::invalid_argument("config: cifar dataset needs cifar_paths");
    if (trigger_kind != "square" && trigger_kind != "image" && trigger_kind != "pattern" &&
        trigger_kind != "digits")
        throw std::invalid_argument("config: trigger_kind must be square|image|pattern|digits");
    if ((trigger_kind == "image" || trigger_kind == "pattern") && trigger_image.empty())
        throw std::invalid_argument("config: trigger_kind " + trigger_kind +
                                    " needs trigger_image");
    if (targets.empty()) throw std::invalid_argument("config: at least one target label");
    if (strip.n_perturb < 1) throw std::invalid_argument("config: n_perturb must be >= 1");
    if (strip.frr_targets.empty()) throw std::invalid_argument("config: no frr targets");
    for (double f : strip.frr_targets)
        if (!(f > 0.0 && f < 1.0))
            throw std::invalid_argument("config: frr targets must lie in (0,1)");
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("config: bad training params");
    parse_schedule(lr_schedule);
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "dataset_kind") c.dataset_kind = value;
    else if (key == "idx_images") c.idx_images = value;
    else if (key == "idx_labels") c.idx_labels = value;
    else if (key == "cifar_paths") c.cifar_paths = split_list(value, ',');
    else if (key == "dataset_classes") c.dataset_classes = std::stoi(value);
    else if (key == "synth_classes") c.synth_classes = std::stoi(value);
    else if (key == "synth_per_class") c.synth_per_class = std::stoi(value);
    else if (key == "synth_height") c.synth_height = std::stoi(value);
    else if (key == "synth_width") c.synth_width = std::stoi(value);
    else if (key == "synth_channels") c.synth_channels = std::stoi(value);
    else if (key == "synth_noise") c.synth_noise = std::stod(value);
    else if (key == "train_fraction") c.train_fraction = std::stod(value);
    else if (key == "valid_fraction") c.valid_fraction = std::stod(value);
    else if (key == "heldout_fraction") c.heldout_fraction = std::stod(value);
    else if (key == "model") c.model = value;
    else if (key == "epochs") c.epochs = std::stoi(value);
    else if (key == "batch_size") c.batch_size = std::stoi(value);
    else if (key == "lr_schedule") c.lr_schedule = value;
    else if (key == "trigger_kind") c.trigger_kind = value;
    else if (key == "trigger_size") c.trigger_size = std::stoi(value);
    else if (key == "trigger_corner") c.trigger_corner = value;
    else if (key == "trigger_intensity") c.trigger_intensity = std::stod(value);
    else if (key == "trigger_transparency") c.trigger_transparency = std::stod(value);
    else if (key == "trigger_image") c.trigger_image = value;
    else if (key == "trigger_digits") c.trigger_digits = std::stoi(value);
    else if (key == "targets") c.targets = parse_int_list(value);
    else if (key == "poison_count") c.poison_count = std::stoi(value);
    else if (key == "source_classes") c.source_classes = parse_int_list(value);
    else if (key == "non_source_count") c.non_source_count = std::stoi(value);
    else if (key == "entropy_manip_n") c.entropy_manip_n = std::stoi(value);
    else if (key == "n_perturb") c.strip.n_perturb = std::stoi(value);
    else if (key == "frr_targets") c.strip.frr_targets = parse_double_list(value);
    else if (key == "calibration_count") c.strip.calibration_count = std::stoi(value);
    else if (key == "eval_benign") c.strip.eval_benign = std::stoi(value);
    else if (key == "eval_trojan") c.strip.eval_trojan = std::stoi(value);
    else if (key == "assert.min_attack_success") c.assertions.min_attack_success = std::stod(value);
    else if (key == "assert.max_clean_drop") c.assertions.max_clean_drop = std::stod(value);
    else if (key == "assert.max_far") c.assertions.max_far = std::stod(value);
    else if (key == "assert.max_frr") c.assertions.max_frr = std::stod(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "out_dir") c.out_dir = value;
    else throw std::invalid_argument("config: unknown key: " + key);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        auto eq = line.find('=', start);
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        std::string key = line.substr(start, eq - start);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        std::size_t vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        apply_override(cfg, key, value);
    }
    return cfg;
}

std::string config_to_text(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "dataset_kind=" << c.dataset_kind << "\n";
    if (!c.idx_images.empty()) os << "idx_images=" << c.idx_images << "\n";
    if (!c.idx_labels.empty()) os << "idx_labels=" << c.idx_labels << "\n";
    if (!c.cifar_paths.empty()) os << "cifar_paths=" << join_list(c.cifar_paths, ',') << "\n";
    if (c.dataset_classes > 0) os << "dataset_classes=" << c.dataset_classes << "\n";
    os << "synth_classes=" << c.synth_classes << "\n";
    os << "synth_per_class=" << c.synth_per_class << "\n";
    os << "synth_height=" << c.synth_height << "\n";
    os << "synth_width=" << c.synth_width << "\n";
    os << "synth_channels=" << c.synth_channels << "\n";
    os << "synth_noise=" << fmt_double(c.synth_noise) << "\n";
    os << "train_fraction=" << fmt_double(c.train_fraction) << "\n";
    os << "valid_fraction=" << fmt_double(c.valid_fraction) << "\n";
    os << "heldout_fraction=" << fmt_double(c.heldout_fraction) << "\n";
    os << "model=" << c.model << "\n";
    os << "epochs=" << c.epochs << "\n";
    os << "batch_size=" << c.batch_size << "\n";
    os << "lr_schedule=" << c.lr_schedule << "\n";
    os << "trigger_kind=" << c.trigger_kind << "\n";
    os << "trigger_size=" << c.trigger_size << "\n";
    os << "trigger_corner=" << c.trigger_corner << "\n";
    os << "trigger_intensity=" << fmt_double(c.trigger_intensity) << "\n";
    os << "trigger_transparency=" << fmt_double(c.trigger_transparency) << "\n";
    if (!c.trigger_image.empty()) os << "trigger_image=" << c.trigger_image << "\n";
    os << "trigger_digits=" << c.trigger_digits << "\n";
    os << "targets=" << int_list_to_text(c.targets) << "\n";
    os << "poison_count=" << c.poison_count << "\n";
    if (!c.source_classes.empty())
        os << "source_classes=" << int_list_to_text(c.source_classes) << "\n";
    if (c.non_source_count >= 0) os << "non_source_count=" << c.non_source_count << "\n";
    if (c.entropy_manip_n > 0) os << "entropy_manip_n=" << c.entropy_manip_n << "\n";
    os << "n_perturb=" << c.strip.n_perturb << "\n";
    os << "frr_targets=" << double_list_to_text(c.strip.frr_targets) << "\n";
    os << "calibration_count=" << c.strip.calibration_count << "\n";
    os << "eval_benign=" << c.strip.eval_benign << "\n";
    os << "eval_trojan=" << c.strip.eval_trojan << "\n";
    if (c.assertions.min_attack_success >= 0)
        os << "assert.min_attack_success=" << fmt_double(c.assertions.min_attack_success) << "\n";
    if (c.assertions.max_clean_drop >= 0)
        os << "assert.max_clean_drop=" << fmt_double(c.assertions.max_clean_drop) << "\n";
    if (c.assertions.max_far >= 0)
        os << "assert.max_far=" << fmt_double(c.assertions.max_far) << "\n";
    if (c.assertions.max_frr >= 0)
        os << "assert.max_frr=" << fmt_double(c.assertions.max_frr) << "\n";
    os << "seed=" << c.seed << "\n";
    os << "out_dir=" << c.out_dir << "\n";
    return os.str();
}

EntropyStats entropy_stats(const std::vector<double>& entropies) {
    EntropyStats s;
    s.mean = mean_of(entropies);
    s.stddev = sample_std(entropies);
    s.min = *std::min_element(entropies.begin(), entropies.end());
    s.max = *std::max_element(entropies.begin(), entropies.end());
    return s;
}

namespace {

LabeledDataset load_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_kind == "idx")
        return load_idx(cfg.idx_images, cfg.idx_labels, cfg.dataset_classes);
    if (cfg.dataset_kind == "cifar") return load_cifar_bin(cfg.cifar_paths);
    return synth_generate(cfg.synth_classes, cfg.synth_per_class, cfg.synth_height,
                          cfg.synth_width, cfg.synth_channels, derive_seed(cfg.seed, 0xda7a),
                          cfg.synth_noise);
}

std::vector<Trigger> build_triggers(const ExperimentConfig& cfg, const Image& shape) {
    std::vector<Trigger> out;
    if (cfg.trigger_kind == "square") {
        Trigger t = make_square_trigger(shape.height(), shape.width(), shape.channels(),
                                        cfg.trigger_size, parse_corner(cfg.trigger_corner),
                                        cfg.trigger_intensity);
        t.transparency = cfg.trigger_transparency;
        out.push_back(std::move(t));
    } else if (cfg.trigger_kind == "image") {
        out.push_back(make_image_trigger(read_pnm(cfg.trigger_image), cfg.trigger_transparency));
    } else if (cfg.trigger_kind == "pattern") {
        out.push_back(make_pattern_trigger(read_pnm(cfg.trigger_image), cfg.trigger_transparency));
    } else {  // digits
        for (int d = 0; d < cfg.trigger_digits; ++d)
            out.push_back(make_digit_trigger(d, shape.height(), shape.width(), shape.channels(),
                                             1, cfg.trigger_transparency));
    }
    return out;
}

std::vector<int> resolve_targets(const ExperimentConfig& cfg, std::size_t n_triggers) {
    if (cfg.targets.size() == n_triggers) return cfg.targets;
    if (cfg.targets.size() == 1) return std::vector<int>(n_triggers, cfg.targets[0]);
    throw std::invalid_argument("config: targets must list one label or one per trigger");
}

std::vector<double> batch_entropies(const Classifier& model, const std::vector<Image>& inputs,
                                    const LabeledDataset& pool, int n, std::uint64_t seed) {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        PerturbationSet pset = perturbation_set(inputs[i], pool, n, derive_seed(seed, i));
        out.push_back(input_entropy(model, pset).normalized);
    }
    return out;
}

double stage_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void write_entropy_csv(const std::string& path, const std::vector<EntropyRecord>& rows) {
    std::ostringstream os;
    os << "input_id,is_trojaned_ground_truth,H,N,seed\n";
    for (const EntropyRecord& r : rows)
        os << r.input_id << "," << (r.trojaned ? 1 : 0) << "," << fmt_double(r.entropy) << ","
           << r.n << "," << r.seed << "\n";
    write_text_file(path, os.str());
}

std::vector<EntropyRecord> read_entropy_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open entropy csv: " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("entropy csv: empty: " + path);
    std::vector<EntropyRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols = split_list(line, ',');
        if (cols.size() != 5) throw std::runtime_error("entropy csv: bad row: " + line);
        EntropyRecord r;
        r.input_id = std::stoi(cols[0]);
        r.trojaned = cols[1] == "1";
        r.entropy = std::stod(cols[2]);
        r.n = std::stoi(cols[3]);
        r.seed = std::stoull(cols[4]);
        out.push_back(r);
    }
    return out;
}

void write_boundary_file(const std::string& path, const DetectionBoundary& b) {
    std::ostringstream os;
    os << "threshold=" << fmt_double(b.threshold) << "\n";
    os << "mean=" << fmt_double(b.benign_mean) << "\n";
    os << "std=" << fmt_double(b.benign_std) << "\n";
    os << "frr_target=" << fmt_double(b.frr_target) << "\n";
    os << "n=" << b.n_perturb << "\n";
    write_text_file(path, os.str());
}

DetectionBoundary read_boundary_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open boundary file: " + path);
    DetectionBoundary b;
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "threshold") b.threshold = std::stod(value);
        else if (key == "mean") b.benign_mean = std::stod(value);
        else if (key == "std") b.benign_std = std::stod(value);
        else if (key == "frr_target") b.frr_target = std::stod(value);
        else if (key == "n") b.n_perturb = std::stoi(value);
    }
    b.degenerate_std = b.benign_std == 0.0;
    return b;
}

void write_histogram_csv(const std::string& path, const std::vector<double>& benign,
                         const std::vector<double>& trojaned, int classes, int bins) {
    const double ceiling = std::log2(static_cast<double>(classes));
    std::vector<int> benign_counts(bins, 0), trojan_counts(bins, 0);
    auto bucket = [&](double h) {
        int b = static_cast<int>(h / ceiling * bins);
        return std::clamp(b, 0, bins - 1);
    };
    for (double h : benign) ++benign_counts[bucket(h)];
    for (double h : trojaned) ++trojan_counts[bucket(h)];
    std::ostringstream os;
    os << "bin_left,bin_right,benign_count,trojan_count\n";
    for (int b = 0; b < bins; ++b)
        os << fmt_double(b * ceiling / bins) << "," << fmt_double((b + 1) * ceiling / bins) << ","
           << benign_counts[b] << "," << trojan_counts[b] << "\n";
    write_text_file(path, os.str());
}

namespace {

std::string report_csv_text(const RunReport& r) {
    std::ostringstream os;
    os << "key,value\n";
    os << "dataset," << r.dataset_name << "\n";
    os << "classes," << r.classes << "\n";
    os << "train_size," << r.train_size << "\n";
    os << "valid_size," << r.valid_size << "\n";
    os << "heldout_size," << r.heldout_size << "\n";
    os << "clean_accuracy," << fmt_double(r.clean_accuracy) << "\n";
    os << "trojan_clean_accuracy," << fmt_double(r.trojan_clean_accuracy) << "\n";
    for (std::size_t i = 0; i < r.attack_success.size(); ++i)
        os << "attack_success." << r.trigger_ids[i] << "," << fmt_double(r.attack_success[i])
           << "\n";
    if (r.source_attack_success >= 0)
        os << "source_attack_success," << fmt_double(r.source_attack_success) << "\n";
    if (r.non_source_attack_success >= 0)
        os << "non_source_attack_success," << fmt_double(r.non_source_attack_success) << "\n";
    os << "benign_entropy_mean," << fmt_double(r.benign_stats.mean) << "\n";
    os << "benign_entropy_std," << fmt_double(r.benign_stats.stddev) << "\n";
    os << "benign_entropy_min," << fmt_double(r.benign_stats.min) << "\n";
    os << "benign_entropy_max," << fmt_double(r.benign_stats.max) << "\n";
    os << "trojan_entropy_mean," << fmt_double(r.trojan_stats.mean) << "\n";
    os << "trojan_entropy_std," << fmt_double(r.trojan_stats.stddev) << "\n";
    os << "trojan_entropy_min," << fmt_double(r.trojan_stats.min) << "\n";
    os << "trojan_entropy_max," << fmt_double(r.trojan_stats.max) << "\n";
    for (const FrrRow& row : r.frr_rows) {
        std::string tag = "frr_" + fmt_double(row.frr_target);
        if (row.degenerate) {
            os << tag << ".degenerate,1\n";
            continue;
        }
        os << tag << ".boundary," << fmt_double(row.boundary.threshold) << "\n";
        os << tag << ".empirical_frr," << fmt_double(row.empirical_frr) << "\n";
        os << tag << ".empirical_far," << fmt_double(row.empirical_far) << "\n";
        for (std::size_t i = 0; i < row.far_per_trigger.size(); ++i)
            os << tag << ".far." << r.trigger_ids[i] << "," << fmt_double(row.far_per_trigger[i])
               << "\n";
    }
    os << "screen_skewness," << fmt_double(r.screen.skewness) << "\n";
    os << "screen_kurtosis," << fmt_double(r.screen.kurtosis) << "\n";
    os << "screen_mean," << fmt_double(r.screen.mean) << "\n";
    os << "screen_abnormal_shape," << (r.screen.abnormal_shape ? 1 : 0) << "\n";
    os << "screen_abnormal_level," << (r.screen.abnormal_level ? 1 : 0) << "\n";
    os << "n_perturb," << r.n_perturb << "\n";
    os << "seed," << r.seed << "\n";
    return os.str();
}

std::string report_text(const RunReport& r) {
    std::ostringstream os;
    os << "dataset: " << r.dataset_name << " (" << r.classes << " classes, train "
       << r.train_size << " / valid " << r.valid_size << " / heldout " << r.heldout_size
       << ")\n";
    os << "model: " << r.model_spec << "\n\n";
    os << "clean model accuracy:          " << fmt_double(r.clean_accuracy) << "\n";
    os << "trojaned model clean accuracy: " << fmt_double(r.trojan_clean_accuracy) << "\n";
    for (std::size_t i = 0; i < r.attack_success.size(); ++i)
        os << "attack success [" << r.trigger_ids[i] << "]: " << fmt_double(r.attack_success[i])
           << "\n";
    if (r.source_attack_success >= 0) {
        os << "attack success (source classes):     " << fmt_double(r.source_attack_success)
           << "\n";
        os << "attack success (non-source classes): " << fmt_double(r.non_source_attack_success)
           << "\n";
    }
    os << "\nentropy (N=" << r.n_perturb << ")\n";
    os << "  benign: mean " << fmt_double(r.benign_stats.mean) << " std "
       << fmt_double(r.benign_stats.stddev) << " min " << fmt_double(r.benign_stats.min)
       << " max " << fmt_double(r.benign_stats.max) << "\n";
    os << "  trojan: mean " << fmt_double(r.trojan_stats.mean) << " std "
       << fmt_double(r.trojan_stats.stddev) << " min " << fmt_double(r.trojan_stats.min)
       << " max " << fmt_double(r.trojan_stats.max) << "\n\n";
    os << "FRR_target  boundary  empirical_FRR  empirical_FAR\n";
    for (const FrrRow& row : r.frr_rows) {
        if (row.degenerate) {
            os << fmt_double(row.frr_target) << "  (degenerate boundary <= 0, not usable)\n";
            continue;
        }
        os << fmt_double(row.frr_target) << "  " << fmt_double(row.boundary.threshold) << "  "
           << fmt_double(row.empirical_frr) << "  " << fmt_double(row.empirical_far) << "\n";
    }
    os << "\nbenign-distribution screen: skew " << fmt_double(r.screen.skewness) << " kurtosis "
       << fmt_double(r.screen.kurtosis) << " mean " << fmt_double(r.screen.mean)
       << (r.screen.fired() ? "  [ABNORMAL]" : "  [ok]") << "\n";
    os << "timings: clean train " << fmt_double(r.clean_train_seconds) << "s, trojan train "
       << fmt_double(r.trojan_train_seconds) << "s, detect " << fmt_double(r.detect_ms)
       << "ms/input\n";
    return os.str();
}

}  // namespace

void emit_report(const RunReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "report.csv").string(), report_csv_text(report));
    write_text_file((fs::path(out_dir) / "report.txt").string(), report_text(report));
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    write_text_file((fs::path(cfg.out_dir) / "config.txt").string(), config_to_text(cfg));

    LabeledDataset full = load_dataset(cfg);
    SplitSpec split_spec;
    split_spec.train_fraction = cfg.train_fraction;
    split_spec.valid_fraction = cfg.valid_fraction;
    split_spec.heldout_fraction = cfg.heldout_fraction;
    split_spec.seed = derive_seed(cfg.seed, 0x5611);
    Splits parts = split(full, split_spec);

    RunReport report;
    report.dataset_name = full.name;
    report.classes = full.classes;
    report.train_size = parts.train.size();
    report.valid_size = parts.valid.size();
    report.heldout_size = parts.heldout.size();
    report.n_perturb = cfg.strip.n_perturb;
    report.seed = cfg.seed;
    report.out_dir = cfg.out_dir;

    ModelSpec model_spec =
        parse_model_spec(cfg.model, full.images.front().height(), full.images.front().width(),
                         full.images.front().channels(), full.classes);
    report.model_spec = model_spec_to_string(model_spec);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr_schedule = parse_schedule(cfg.lr_schedule);
    tc.seed = derive_seed(cfg.seed, 0x7261);

    const std::uint64_t init_seed = derive_seed(cfg.seed, 0x1217);

    auto t0 = std::chrono::steady_clock::now();
    TrainResult clean = train(Classifier(model_spec, init_seed), parts.train, tc);
    report.clean_train_seconds = stage_seconds(t0);
    report.clean_accuracy = evaluate_accuracy(clean.model, parts.valid);

    std::vector<Trigger> triggers = build_triggers(cfg, full.images.front());
    std::vector<int> targets = resolve_targets(cfg, triggers.size());
    for (const Trigger& t : triggers) report.trigger_ids.push_back(t.id);
    for (std::size_t i = 0; i < triggers.size(); ++i) {
        std::string stem = (fs::path(cfg.out_dir) / ("trigger_" + triggers[i].id)).string();
        save_trigger(triggers[i],
                     stem + (triggers[i].pattern.channels() == 3 ? ".ppm" : ".pgm"),
                     stem + ".txt");
    }

    PoisonSpec poison_spec;
    poison_spec.triggers = triggers;
    poison_spec.targets = targets;
    poison_spec.poison_count = cfg.poison_count;
    poison_spec.seed = derive_seed(cfg.seed, 0x2019);
    poison_spec.source_classes = cfg.source_classes;
    poison_spec.entropy_manip_n = std::max(0, cfg.entropy_manip_n);

    LabeledDataset poisoned_train;
    if (!cfg.source_classes.empty()) {
        poison_spec.non_source_count =
            cfg.non_source_count >= 0 ? cfg.non_source_count : cfg.poison_count;
        poisoned_train = poison_partial(parts.train, poison_spec);
    } else if (cfg.entropy_manip_n > 0) {
        poisoned_train = poison_entropy_manip(parts.train, poison_spec);
    } else {
        poisoned_train = poison(parts.train, poison_spec);
    }

    auto t1 = std::chrono::steady_clock::now();
    TrainResult trojan = train(Classifier(model_spec, init_seed), poisoned_train, tc);
    report.trojan_train_seconds = stage_seconds(t1);
    report.trojan_clean_accuracy = evaluate_accuracy(trojan.model, parts.valid);

    for (std::size_t i = 0; i < triggers.size(); ++i)
        report.attack_success.push_back(
            attack_success_rate(trojan.model, parts.valid, triggers[i], targets[i]));

    if (!cfg.source_classes.empty()) {
        auto subset = [&](bool want_source) {
            LabeledDataset out;
            out.classes = parts.valid.classes;
            for (std::size_t i = 0; i < parts.valid.size(); ++i) {
                bool is_source =
                    std::find(cfg.source_classes.begin(), cfg.source_classes.end(),
                              parts.valid.labels[i]) != cfg.source_classes.end();
                bool is_target = std::find(targets.begin(), targets.end(),
                                           parts.valid.labels[i]) != targets.end();
                if (is_target) continue;
                if (is_source == want_source)
                    out.push(parts.valid.images[i], parts.valid.labels[i]);
            }
            return out;
        };
        report.source_attack_success =
            attack_success_rate(trojan.model, subset(true), triggers[0], targets[0]);
        report.non_source_attack_success =
            attack_success_rate(trojan.model, subset(false), triggers[0], targets[0]);
    }

    // STRIP: the held-out pool provides both the perturbing overlays and the
    // calibration inputs; FRR/FAR are evaluated on the valid split
    const LabeledDataset& pool = parts.heldout;
    const int n_perturb = cfg.strip.n_perturb;

    const int calib_n = std::min<int>(cfg.strip.calibration_count, pool.size());
    std::vector<Image> calib_inputs(pool.images.begin(), pool.images.begin() + calib_n);
    std::vector<double> calib_entropies = batch_entropies(
        trojan.model, calib_inputs, pool, n_perturb, derive_seed(cfg.seed, 0xca11));

    const int benign_n = std::min<int>(cfg.strip.eval_benign, parts.valid.size());
    std::vector<Image> benign_inputs(parts.valid.images.begin(),
                                     parts.valid.images.begin() + benign_n);
    std::vector<double> benign_entropies = batch_entropies(
        trojan.model, benign_inputs, pool, n_perturb, derive_seed(cfg.seed, 0xbe01));

    const int trojan_total = std::min<int>(cfg.strip.eval_trojan, parts.valid.size());
    std::vector<std::vector<double>> trojan_entropies_per_trigger(triggers.size());
    std::vector<double> trojan_entropies;
    for (int i = 0; i < trojan_total; ++i) {
        const std::size_t ti = i % triggers.size();
        Image stamped = stamp(parts.valid.images[i], triggers[ti]);
        PerturbationSet pset = perturbation_set(stamped, pool, n_perturb,
                                                derive_seed(cfg.seed, 0x7301 + i));
        double h = input_entropy(trojan.model, pset).normalized;
        trojan_entropies_per_trigger[ti].push_back(h);
        trojan_entropies.push_back(h);
    }

    report.benign_stats = entropy_stats(benign_entropies);
    report.trojan_stats = entropy_stats(trojan_entropies);
    report.screen = screen_benign_distribution(calib_entropies, full.classes);

    for (double frr_target : cfg.strip.frr_targets) {
        FrrRow row;
        row.frr_target = frr_target;
        try {
            row.boundary = calibrate_boundary(calib_entropies, frr_target, n_perturb);
            FarFrr pooled =
                compute_far_frr(benign_entropies, trojan_entropies, row.boundary.threshold);
            row.empirical_frr = pooled.frr;
            row.empirical_far = pooled.far;
            for (const std::vector<double>& per : trojan_entropies_per_trigger)
                row.far_per_trigger.push_back(
                    compute_far_frr(benign_entropies, per, row.boundary.threshold).far);
            std::string name = "boundary_frr" + fmt_double(frr_target) + ".txt";
            write_boundary_file((fs::path(cfg.out_dir) / name).string(), row.boundary);
        } catch (const DegenerateBoundary&) {
            row.degenerate = true;
        }
        report.frr_rows.push_back(std::move(row));
    }

    // single-input latency, median of 5
    report.detect_ms =
        bench_latency(trojan.model, parts.valid.images[0], pool, n_perturb, 5).strip_ms;

    // artifacts: entropy dump, histogram, calibration dump, checkpoints
    std::vector<EntropyRecord> records;
    int next_id = 0;
    for (double h : benign_entropies)
        records.push_back({next_id++, false, h, n_perturb, cfg.seed});
    for (double h : trojan_entropies)
        records.push_back({next_id++, true, h, n_perturb, cfg.seed});
    write_entropy_csv((fs::path(cfg.out_dir) / "entropies.csv").string(), records);

    std::vector<EntropyRecord> calib_records;
    next_id = 0;
    for (double h : calib_entropies)
        calib_records.push_back({next_id++, false, h, n_perturb, cfg.seed});
    write_entropy_csv((fs::path(cfg.out_dir) / "calibration_entropies.csv").string(),
                      calib_records);

    write_histogram_csv((fs::path(cfg.out_dir) / "histogram.csv").string(), benign_entropies,
                        trojan_entropies, full.classes);

    save_model(clean.model, (fs::path(cfg.out_dir) / "model_clean.bin").string());
    save_model(trojan.model, (fs::path(cfg.out_dir) / "model_trojan.bin").string());

    emit_report(report, cfg.out_dir);
    return report;
}

std::vector<SweepRow> sweep_transparency(const ExperimentConfig& base,
                                         const std::vector<double>& levels) {
    for (double level : levels)
        if (level < 0.0 || level > 1.0)
            throw std::invalid_argument("sweep: transparency levels must lie in [0,1]");
    std::vector<SweepRow> rows;
    for (double level : levels) {
        ExperimentConfig cfg = base;
        cfg.trigger_transparency = level;
        char sub[48];
        std::snprintf(sub, sizeof sub, "transparency_%.2f", level);
        cfg.out_dir = (fs::path(base.out_dir) / sub).string();
        RunReport rep = run_experiment(cfg);
        SweepRow row;
        row.transparency = level;
        row.clean_accuracy = rep.trojan_clean_accuracy;
        row.attack_success = rep.attack_success.front();
        row.min_benign_entropy = rep.benign_stats.min;
        row.max_trojan_entropy = rep.trojan_stats.max;
        row.mean_benign_entropy = rep.benign_stats.mean;
        row.mean_trojan_entropy = rep.trojan_stats.mean;
        row.degenerate = rep.frr_rows.front().degenerate;
        if (!row.degenerate) {
            row.boundary = rep.frr_rows.front().boundary.threshold;
            row.far = rep.frr_rows.front().empirical_far;
        }
        rows.push_back(row);
    }
    // summary table next to the per-level directories
    std::ostringstream os;
    os << "transparency,clean_accuracy,attack_success,min_benign_entropy,max_trojan_entropy,"
          "boundary,far,degenerate\n";
    for (const SweepRow& r : rows)
        os << fmt_double(r.transparency) << "," << fmt_double(r.clean_accuracy) << ","
           << fmt_double(r.attack_success) << "," << fmt_double(r.min_benign_entropy) << ","
           << fmt_double(r.max_trojan_entropy) << "," << fmt_double(r.boundary) << ","
           << fmt_double(r.far) << "," << (r.degenerate ? 1 : 0) << "\n";
    fs::create_directories(base.out_dir);
    write_text_file((fs::path(base.out_dir) / "sweep.csv").string(), os.str());
    return rows;
}

}  // namespace strip
