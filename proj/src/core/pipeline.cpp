// SPDX-License-Identifier: Apache-2.0

#include "core/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/error.hpp"
#include "core/hash.hpp"
#include "core/log.hpp"

namespace mdap {

namespace fs = std::filesystem;

// ---- value parsing -----------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw ParameterError("invalid value '" + std::string(text) + "' for --" + std::string(key));
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    if (t == "1" || t == "true" || t == "yes" || t == "on") {
        return true;
    }
    if (t == "0" || t == "false" || t == "no" || t == "off") {
        return false;
    }
    throw ParameterError("invalid boolean '" + std::string(text) + "' for --" + std::string(key));
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = std::min(text.find(',', start), text.size());
        out.push_back(parse_value<T>(key, text.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
std::string format_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(values[i]);
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

struct Option {
    const char* name;
    void (*set)(RunConfig&, std::string_view key, std::string_view value);
    std::string (*get)(const RunConfig&);
};

// clang-format off
#define MDAP_STR_OPTION(key, field) \
    {key, [](RunConfig& c, std::string_view, std::string_view v) { c.field = trim(v); }, \
          [](const RunConfig& c) { return c.field; }}
#define MDAP_NUM_OPTION(key, field, type) \
    {key, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_value<type>(k, v); }, \
          [](const RunConfig& c) { if constexpr (std::is_floating_point_v<type>) return format_double(c.field); else return std::to_string(c.field); }}
#define MDAP_LIST_OPTION(key, field, type) \
    {key, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_list<type>(k, v); }, \
          [](const RunConfig& c) { return format_list(c.field); }}

const std::vector<Option>& options() {
    static const std::vector<Option> table = {
        MDAP_STR_OPTION("domain-s", domain_s),
        MDAP_STR_OPTION("domain-t", domain_t),
        MDAP_STR_OPTION("out", out),
        MDAP_STR_OPTION("data", data),
        MDAP_STR_OPTION("checkpoint", checkpoint),
        MDAP_STR_OPTION("split", split),
        MDAP_NUM_OPTION("seed", seed, std::uint64_t),
        MDAP_NUM_OPTION("threshold", threshold, double),
        MDAP_NUM_OPTION("min-interactions", min_interactions, std::size_t),
        {"strict", [](RunConfig& c, std::string_view k, std::string_view v) { c.strict = parse_bool(k, v); },
                   [](const RunConfig& c) { return std::string(c.strict ? "true" : "false"); }},
        MDAP_NUM_OPTION("k", k, std::size_t),
        MDAP_NUM_OPTION("tau", tau, double),
        MDAP_NUM_OPTION("lambda", lambda, double),
        MDAP_NUM_OPTION("dropout", dropout, double),
        MDAP_NUM_OPTION("embed-dim", embed_dim, std::size_t),
        MDAP_NUM_OPTION("hidden", hidden, std::size_t),
        MDAP_STR_OPTION("ablation", ablation),
        MDAP_NUM_OPTION("epochs", epochs, std::size_t),
        MDAP_NUM_OPTION("patience", patience, std::size_t),
        MDAP_NUM_OPTION("batch-users", batch_users, std::size_t),
        MDAP_NUM_OPTION("lr", lr, double),
        MDAP_NUM_OPTION("cutoff", cutoff, std::size_t),
        MDAP_NUM_OPTION("n-users", synth.n_users, std::size_t),
        MDAP_NUM_OPTION("n-items-s", synth.n_items_s, std::size_t),
        MDAP_NUM_OPTION("n-items-t", synth.n_items_t, std::size_t),
        MDAP_NUM_OPTION("k-true", synth.k_true, std::size_t),
        MDAP_NUM_OPTION("overlap", synth.overlap, double),
        MDAP_NUM_OPTION("noise", synth.noise, double),
        MDAP_NUM_OPTION("per-user", synth.per_user, std::size_t),
        MDAP_LIST_OPTION("grid-dropout", grid.dropout, double),
        MDAP_LIST_OPTION("grid-tau", grid.tau, double),
        MDAP_LIST_OPTION("grid-k", grid.k, std::size_t),
        MDAP_LIST_OPTION("grid-lambda", grid.lambda, double),
        {"grid-full", [](RunConfig& c, std::string_view k, std::string_view v) { c.grid.full = parse_bool(k, v); },
                      [](const RunConfig& c) { return std::string(c.grid.full ? "true" : "false"); }},
    };
    return table;
}
// clang-format on

#undef MDAP_STR_OPTION
#undef MDAP_NUM_OPTION
#undef MDAP_LIST_OPTION

std::string_view strip_dashes(std::string_view key) {
    while (!key.empty() && key.front() == '-') {
        key.remove_prefix(1);
    }
    return key;
}

} // namespace

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& o : options()) {
            k.emplace_back(o.name);
        }
        k.emplace_back("preset");
        return k;
    }();
    return keys;
}

// ---- RunConfig ---------------------------------------------------------------

void RunConfig::set(std::string_view key, std::string_view value) {
    key = strip_dashes(key);
    if (key == "preset") {
        apply_preset(trim(value));
        return;
    }
    for (const auto& o : options()) {
        if (key == o.name) {
            o.set(*this, key, value);
            return;
        }
    }
    throw ParameterError("unknown option '" + std::string(key) + "'");
}

void RunConfig::apply_preset(std::string_view name) {
    // dropout, tau, k, lambda tuned per dataset
    if (name == "epinions") {
        dropout = 0.5, tau = 0.2, k = 8, lambda = 0.5;
    } else if (name == "douban") {
        dropout = 0.7, tau = 0.1, k = 16, lambda = 0.1;
    } else if (name == "amazon") {
        dropout = 0.7, tau = 0.1, k = 4, lambda = 0.1;
    } else {
        throw ParameterError("unknown preset '" + std::string(name) + "' (expected epinions, douban or amazon)");
    }
}

void RunConfig::load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config file " + path.string());
    }
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        entries.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    for (const auto& [k, v] : entries) {
        if (strip_dashes(k) == "preset") {
            set(k, v);
        }
    }
    for (const auto& [k, v] : entries) {
        if (strip_dashes(k) != "preset") {
            set(k, v);
        }
    }
}

void RunConfig::validate() const {
    model_config().validate();
    train_config().validate();
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ParameterError("dropout probability must lie in [0, 1)");
    }
    if (min_interactions < 1) {
        throw ParameterError("min-interactions must be at least 1");
    }
    if (!std::isfinite(threshold)) {
        throw ParameterError("threshold must be finite");
    }
    parse_split(split);
    synth.validate();
    if (grid.dropout.empty() || grid.tau.empty() || grid.k.empty() || grid.lambda.empty()) {
        throw ParameterError("grid ranges must not be empty");
    }
    for (double d : grid.dropout) {
        if (!(d >= 0.0 && d < 1.0)) {
            throw ParameterError("grid dropout values must lie in [0, 1)");
        }
    }
    for (double t : grid.tau) {
        if (!(t > 0.0)) {
            throw ParameterError("grid tau values must be positive");
        }
    }
    for (std::size_t v : grid.k) {
        if (v < 1) {
            throw ParameterError("grid k values must be at least 1");
        }
    }
    for (double l : grid.lambda) {
        if (!(l >= 0.0)) {
            throw ParameterError("grid lambda values must be nonnegative");
        }
    }
}

std::string RunConfig::canonical() const {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& o : options()) {
        kv.emplace_back(o.name, o.get(*this));
    }
    std::sort(kv.begin(), kv.end());
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k + "=" + v + "\n";
    }
    return out;
}

std::string RunConfig::hash() const {
    return hex64(fnv1a64(canonical()));
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.views = k;
    m.embed_dim = embed_dim;
    m.hidden = hidden;
    m.tau = tau;
    m.keep_prob = 1.0 - dropout;
    m.lambda = lambda;
    m.ablation = parse_ablation(ablation);
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs_max = epochs;
    t.patience = patience;
    t.batch_users = batch_users;
    t.lr = lr;
    t.seed = seed;
    t.eval_k = cutoff;
    t.model = model_config();
    return t;
}

// ---- output staging ----------------------------------------------------------

namespace {

/// Files are collected in memory and written only once the command has
/// finished its work.
class OutputBundle {
public:
    explicit OutputBundle(fs::path root) : root_(std::move(root)) {}

    void add(const fs::path& relative, std::string content) { files_.emplace_back(relative, std::move(content)); }
    void add(const fs::path& relative, const std::vector<std::uint8_t>& bytes) {
        files_.emplace_back(relative, std::string(bytes.begin(), bytes.end()));
    }

    void commit() const {
        for (const auto& [rel, content] : files_) {
            const fs::path path = root_ / rel;
            std::error_code ec;
            fs::create_directories(path.parent_path(), ec);
            if (ec) {
                throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
            }
            const fs::path tmp = path.string() + ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary);
                out.write(content.data(), static_cast<std::streamsize>(content.size()));
                if (!out) {
                    throw IoError("cannot write " + tmp.string());
                }
            }
            fs::rename(tmp, path, ec);
            if (ec) {
                throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
            }
        }
    }

private:
    fs::path root_;
    std::vector<std::pair<fs::path, std::string>> files_;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw ParameterError(std::string("missing required option --") + flag);
    }
}

std::string config_file_text(const RunConfig& config, std::string_view command) {
    return "# command=" + std::string(command) + " config_hash=" + config.hash() + "\n" + config.canonical();
}

std::string dataset_files_text(const InteractionDataset& ds, Domain d) {
    std::ostringstream os;
    os << ds.split_size(d, Split::train) << "/" << ds.split_size(d, Split::valid) << "/"
       << ds.split_size(d, Split::test);
    return os.str();
}

} // namespace

// ---- prepare / load ----------------------------------------------------------

std::string run_prepare(const RunConfig& config) {
    config.validate();
    require_path(config.domain_s, "domain-s");
    require_path(config.domain_t, "domain-t");
    require_path(config.out, "out");

    const LoadOptions load_opts{'\t', config.strict};
    std::array<std::vector<InteractionRecord>, 2> records;
    std::array<std::size_t, 2> warnings{};
    const std::array<std::string, 2> paths = {config.domain_s, config.domain_t};
    for (std::size_t d = 0; d < 2; ++d) {
        LoadResult loaded = load_domain(paths[d], load_opts);
        for (const auto& w : loaded.warnings) {
            log_warning(paths[d] + ":" + std::to_string(w.line) + ": " + w.reason);
        }
        warnings[d] = loaded.warnings.size();
        records[d] = k_core_filter(loaded.records, config.min_interactions);
    }
    Rng rng(config.seed);
    InteractionDataset ds = build_dataset(records[0], records[1], config.threshold, SplitRatios{}, rng);
    ds.k_core = config.min_interactions;

    nlohmann::ordered_json manifest;
    manifest["seed"] = config.seed;
    manifest["users"] = ds.num_users();
    manifest["items_s"] = ds.num_items(Domain::source);
    manifest["items_t"] = ds.num_items(Domain::target);
    for (Domain d : kDomains) {
        std::size_t present = 0;
        for (const auto& per_user : ds.split_items(d, Split::train)) {
            present += per_user.empty() ? 0 : 1;
        }
        manifest["splits"][domain_tag(d)] = {{"train", ds.split_size(d, Split::train)},
                                             {"valid", ds.split_size(d, Split::valid)},
                                             {"test", ds.split_size(d, Split::test)},
                                             {"users_present", present}};
    }
    manifest["threshold"] = config.threshold;
    manifest["k_core"] = config.min_interactions;
    manifest["split_ratios"] = {0.8, 0.1, 0.1};
    manifest["sources"] = {{"s", config.domain_s}, {"t", config.domain_t}};
    manifest["malformed_lines"] = {{"s", warnings[0]}, {"t", warnings[1]}};
    manifest["config_hash"] = config.hash();

    // splits are serialized straight into the bundle
    const fs::path staging = fs::temp_directory_path() / ("mdap-prepare-" + config.hash() + "-" +
                                                          std::to_string(reinterpret_cast<std::uintptr_t>(&ds)));
    save_splits(ds, staging);
    OutputBundle bundle(config.out);
    for (const auto& entry : fs::directory_iterator(staging)) {
        bundle.add(fs::path("splits") / entry.path().filename(), read_file(entry.path()));
    }
    fs::remove_all(staging);
    bundle.add("manifest.json", manifest.dump(2) + "\n");
    bundle.add("logs/prepare_run_config.txt", config_file_text(config, "prepare"));
    bundle.commit();

    std::ostringstream os;
    os << "prepared " << ds.num_users() << " users, " << ds.num_items(Domain::source) << " source items, "
       << ds.num_items(Domain::target) << " target items; splits s=" << dataset_files_text(ds, Domain::source)
       << " t=" << dataset_files_text(ds, Domain::target) << " -> " << config.out;
    return os.str();
}

PreparedDataset load_prepared(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DataError("no prepared dataset in " + dir.string() + " (run 'prepare' first)");
    }
    PreparedDataset out;
    out.manifest_json = read_file(manifest_path);
    out.dataset = load_splits(dir / "splits");
    try {
        const auto j = nlohmann::json::parse(out.manifest_json);
        out.dataset.seed = j.at("seed").get<std::uint64_t>();
        out.dataset.binarization_threshold = j.at("threshold").get<double>();
        out.dataset.k_core = j.at("k_core").get<std::size_t>();
        if (j.at("users").get<std::size_t>() != out.dataset.num_users() ||
            j.at("items_s").get<std::size_t>() != out.dataset.num_items(Domain::source) ||
            j.at("items_t").get<std::size_t>() != out.dataset.num_items(Domain::target)) {
            throw DataError("manifest counts disagree with split files in " + dir.string());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return out;
}

// ---- synth -------------------------------------------------------------------

std::string run_synth(const RunConfig& config) {
    config.validate();
    require_path(config.out, "out");
    Rng rng(config.seed);
    const SyntheticData data = generate_synthetic(config.synth, rng);

    std::ostringstream planted;
    planted << "# user_id\tplanted_view\n";
    for (std::size_t u = 0; u < data.user_ids.size(); ++u) {
        planted << data.user_ids[u] << '\t' << data.planted[u] << '\n';
    }
    const auto records_text = [](const std::vector<InteractionRecord>& records) {
        std::ostringstream os;
        for (const auto& r : records) {
            os << r.user_id << '\t' << r.item_id << '\t' << format_double(r.rating) << '\n';
        }
        return os.str();
    };

    nlohmann::ordered_json manifest;
    manifest["seed"] = config.seed;
    manifest["n_users"] = config.synth.n_users;
    manifest["n_items_s"] = config.synth.n_items_s;
    manifest["n_items_t"] = config.synth.n_items_t;
    manifest["k_true"] = config.synth.k_true;
    manifest["overlap"] = config.synth.overlap;
    manifest["noise"] = config.synth.noise;
    manifest["per_user"] = config.synth.per_user;
    manifest["interactions_s"] = data.records_s.size();
    manifest["interactions_t"] = data.records_t.size();
    manifest["config_hash"] = config.hash();

    OutputBundle bundle(config.out);
    bundle.add("domain_s.tsv", records_text(data.records_s));
    bundle.add("domain_t.tsv", records_text(data.records_t));
    bundle.add("planted.tsv", planted.str());
    bundle.add("synth_manifest.json", manifest.dump(2) + "\n");
    bundle.commit();

    std::ostringstream os;
    os << "wrote " << data.records_s.size() << " source and " << data.records_t.size()
       << " target interactions for " << config.synth.n_users << " users -> " << config.out;
    return os.str();
}

// ---- train / evaluate ----------------------------------------------------------

namespace {

void require_prepared(const RunConfig& config) {
    if (config.out.empty()) {
        throw ParameterError("missing required option --out");
    }
}

MetricsReport stamped(MetricsReport report, const Checkpoint& ckpt, const RunConfig& config) {
    report.seed = config.seed;
    report.checkpoint_id = checkpoint_id(ckpt);
    report.config_hash = config.hash();
    return report;
}

} // namespace

std::string run_train(const RunConfig& config) {
    config.validate();
    require_prepared(config);
    const PreparedDataset prepared = load_prepared(config.data_dir());
    const TrainConfig tc = config.train_config();
    TrainResult result = train(prepared.dataset, tc);

    Checkpoint ckpt{tc.model, std::move(result.params)};
    const auto bytes = serialize_checkpoint(ckpt);
    const MetricsReport report =
        stamped(evaluate(ckpt.params, ckpt.config, prepared.dataset, Split::test, tc.eval_k, tc.batch_users), ckpt,
                config);

    nlohmann::ordered_json summary;
    summary["best_epoch"] = result.log.best_epoch;
    summary["epochs_run"] = result.log.epochs.size();
    summary["seed"] = config.seed;
    summary["config_hash"] = config.hash();
    summary["checkpoint_id"] = report.checkpoint_id;
    summary["checkpoint"] = "checkpoints/best.ckpt";

    OutputBundle bundle(config.out);
    bundle.add("checkpoints/best.ckpt", bytes);
    bundle.add("logs/train_log.jsonl", result.log.to_jsonl());
    bundle.add("logs/train_run_config.txt", config_file_text(config, "train"));
    bundle.add("reports/test_metrics.json", report.to_json());
    bundle.add("reports/test_metrics.txt", report.to_text());
    bundle.add("reports/train_summary.json", summary.dump(2) + "\n");
    bundle.commit();

    std::ostringstream os;
    os << "trained " << result.log.epochs.size() << " epoch(s), best epoch " << result.log.best_epoch
       << "; checkpoint " << report.checkpoint_id << "\n"
       << report.to_text();
    return os.str();
}

std::string run_evaluate(const RunConfig& config) {
    config.validate();
    require_prepared(config);
    const Split split = parse_split(config.split);
    const fs::path ckpt_path =
        config.checkpoint.empty() ? fs::path(config.out) / "checkpoints" / "best.ckpt" : fs::path(config.checkpoint);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const PreparedDataset prepared = load_prepared(config.data_dir());
    if (ckpt.params.items_s != prepared.dataset.num_items(Domain::source) ||
        ckpt.params.items_t != prepared.dataset.num_items(Domain::target)) {
        throw DataError("checkpoint item counts do not match the prepared dataset");
    }
    const MetricsReport report = stamped(
        evaluate(ckpt.params, ckpt.config, prepared.dataset, split, config.cutoff, config.batch_users), ckpt, config);

    OutputBundle bundle(config.out);
    const std::string stem = std::string("reports/eval_") + split_name(split);
    bundle.add(stem + ".json", report.to_json());
    bundle.add(stem + ".txt", report.to_text());
    bundle.commit();
    return report.to_text();
}

// ---- ablation ------------------------------------------------------------------

std::string run_ablate(const RunConfig& config) {
    config.validate();
    require_prepared(config);
    const PreparedDataset prepared = load_prepared(config.data_dir());
    const AblationReport report = run_ablation(prepared.dataset, config.train_config());

    nlohmann::ordered_json doc = nlohmann::ordered_json::parse(report.to_json());
    doc["config_hash"] = config.hash();

    OutputBundle bundle(config.out);
    bundle.add("reports/ablation.json", doc.dump(2) + "\n");
    bundle.add("reports/ablation.txt", report.to_text());
    for (const auto& row : report.rows) {
        bundle.add("logs/ablation_" + std::string(ablation_name(row.variant)) + ".jsonl", row.log.to_jsonl());
    }
    bundle.add("logs/ablate_run_config.txt", config_file_text(config, "ablate"));
    bundle.commit();
    return report.to_text();
}

// ---- grid ----------------------------------------------------------------------

std::vector<GridPoint> staged_grid_search(const GridRanges& ranges, const GridPoint& base,
                                          const std::function<double(const GridPoint&)>& evaluate) {
    std::vector<GridPoint> visited;
    std::vector<double> scores;
    const auto score_of = [&](const GridPoint& p) {
        for (std::size_t i = 0; i < visited.size(); ++i) {
            if (visited[i] == p) {
                return scores[i];
            }
        }
        const double s = evaluate(p);
        visited.push_back(p);
        scores.push_back(s);
        return s;
    };
    const auto pick = [](const auto& values, auto fallback) {
        return std::find(values.begin(), values.end(), fallback) != values.end() ? fallback : values.front();
    };

    if (ranges.full) {
        for (double d : ranges.dropout) {
            for (double t : ranges.tau) {
                for (std::size_t k : ranges.k) {
                    for (double l : ranges.lambda) {
                        score_of({d, t, k, l});
                    }
                }
            }
        }
        return visited;
    }

    GridPoint best{ranges.dropout.front(), ranges.tau.front(), pick(ranges.k, base.k), pick(ranges.lambda, base.lambda)};
    double best_score = -std::numeric_limits<double>::infinity();
    const auto consider = [&](const GridPoint& p) {
        const double s = score_of(p);
        if (s > best_score) {
            best_score = s;
            best = p;
        }
    };
    const GridPoint stage1_hold = best;
    for (double d : ranges.dropout) {
        for (double t : ranges.tau) {
            consider({d, t, stage1_hold.k, stage1_hold.lambda});
        }
    }
    const GridPoint after1 = best;
    for (std::size_t k : ranges.k) {
        consider({after1.dropout, after1.tau, k, after1.lambda});
    }
    const GridPoint after2 = best;
    for (double l : ranges.lambda) {
        consider({after2.dropout, after2.tau, after2.k, l});
    }
    return visited;
}

std::string run_grid(const RunConfig& config) {
    config.validate();
    require_prepared(config);
    const PreparedDataset prepared = load_prepared(config.data_dir());

    struct RunRecord {
        GridPoint point;
        EpochRecord best;
        std::size_t best_epoch = 0;
        std::size_t epochs_run = 0;
        std::string log;
    };
    std::vector<RunRecord> runs;
    const auto evaluate_point = [&](const GridPoint& p) {
        RunConfig rc = config;
        rc.dropout = p.dropout;
        rc.tau = p.tau;
        rc.k = p.k;
        rc.lambda = p.lambda;
        std::ostringstream msg;
        msg << "grid run " << runs.size() + 1 << ": dropout=" << p.dropout << " tau=" << p.tau << " k=" << p.k
            << " lambda=" << p.lambda;
        log_info(msg.str());
        const TrainResult r = train(prepared.dataset, rc.train_config());
        RunRecord rec;
        rec.point = p;
        rec.best_epoch = r.log.best_epoch;
        rec.epochs_run = r.log.epochs.size();
        rec.best = r.log.best_epoch > 0 ? r.log.epochs.at(r.log.best_epoch - 1) : r.log.epochs.back();
        rec.log = r.log.to_jsonl();
        runs.push_back(std::move(rec));
        return runs.back().best.criterion();
    };
    const GridPoint base{config.dropout, config.tau, config.k, config.lambda};
    staged_grid_search(config.grid, base, evaluate_point);

    std::size_t best_index = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].best.criterion() > runs[best_index].best.criterion()) {
            best_index = i;
        }
    }

    nlohmann::ordered_json doc;
    doc["mode"] = config.grid.full ? "full" : "staged";
    doc["seed"] = config.seed;
    doc["config_hash"] = config.hash();
    doc["criterion"] = "mean validation NDCG@" + std::to_string(config.cutoff);
    auto arr = nlohmann::ordered_json::array();
    std::ostringstream text;
    text << std::left << std::setw(5) << "run" << std::right << std::setw(9) << "dropout" << std::setw(7) << "tau"
         << std::setw(5) << "k" << std::setw(8) << "lambda" << std::setw(7) << "seed" << std::setw(7) << "epoch"
         << std::setw(10) << "ndcg_s" << std::setw(10) << "ndcg_t" << std::setw(10) << "rec_s" << std::setw(10)
         << "rec_t" << "\n";
    OutputBundle bundle(config.out);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        nlohmann::ordered_json j;
        j["run"] = i + 1;
        j["dropout"] = r.point.dropout;
        j["tau"] = r.point.tau;
        j["k"] = r.point.k;
        j["lambda"] = r.point.lambda;
        j["seed"] = config.seed;
        j["best_epoch"] = r.best_epoch;
        j["epochs_run"] = r.epochs_run;
        j["val_recall_s"] = r.best.val_recall[0];
        j["val_recall_t"] = r.best.val_recall[1];
        j["val_ndcg_s"] = r.best.val_ndcg[0];
        j["val_ndcg_t"] = r.best.val_ndcg[1];
        j["criterion"] = r.best.criterion();
        arr.push_back(std::move(j));
        text << std::left << std::setw(5) << (i + 1) << std::right << std::setw(9) << r.point.dropout << std::setw(7)
             << r.point.tau << std::setw(5) << r.point.k << std::setw(8) << r.point.lambda << std::setw(7)
             << config.seed << std::setw(7) << r.best_epoch << std::fixed << std::setprecision(4) << std::setw(10)
             << r.best.val_ndcg[0] << std::setw(10) << r.best.val_ndcg[1] << std::setw(10) << r.best.val_recall[0]
             << std::setw(10) << r.best.val_recall[1] << std::defaultfloat << "\n";
        bundle.add("logs/grid_run_" + std::to_string(i + 1) + ".jsonl", r.log);
    }
    doc["runs"] = std::move(arr);
    const auto& best = runs[best_index];
    doc["best"] = {{"run", best_index + 1},
                   {"dropout", best.point.dropout},
                   {"tau", best.point.tau},
                   {"k", best.point.k},
                   {"lambda", best.point.lambda},
                   {"criterion", best.best.criterion()}};
    text << "best: run " << best_index + 1 << " dropout=" << best.point.dropout << " tau=" << best.point.tau
         << " k=" << best.point.k << " lambda=" << best.point.lambda << "\n";

    bundle.add("reports/grid.json", doc.dump(2) + "\n");
    bundle.add("reports/grid.txt", text.str());
    bundle.add("logs/grid_run_config.txt", config_file_text(config, "grid"));
    bundle.commit();
    return text.str();
}

std::string run_command(std::string_view command, const RunConfig& config) {
    if (command == "prepare") {
        return run_prepare(config);
    }
    if (command == "synth") {
        return run_synth(config);
    }
    if (command == "train") {
        return run_train(config);
    }
    if (command == "evaluate") {
        return run_evaluate(config);
    }
    if (command == "ablate") {
        return run_ablate(config);
    }
    if (command == "grid") {
        return run_grid(config);
    }
    throw ParameterError("unknown command '" + std::string(command) + "'");
}

} // namespace mdap
