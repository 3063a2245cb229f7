#include "cotsfa/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "cotsfa/augment.hpp"
#include "cotsfa/config.hpp"
#include "cotsfa/dataset.hpp"
#include "cotsfa/errors.hpp"
#include "cotsfa/eval.hpp"
#include "cotsfa/log.hpp"
#include "cotsfa/model.hpp"
#include "cotsfa/train.hpp"

namespace cotsfa::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kDatasetManifest = "manifest.json";
constexpr const char* kContaminationManifest = "contamination.json";

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Options shared by every subcommand: the config file, one flag per config
// key, and the flag values that were actually given.
struct CommonOptions {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> flags;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "JSON config file (flags override it)");
        for (const auto& k : config::keys()) {
            flags[k.key] = app->add_option("--" + k.key, values[k.key], k.help + " [default: " + k.default_text + "]")
                               ->group("Config keys");
        }
    }

    config::Document document() const {
        config::Document doc = config_path.empty() ? config::defaults() : config::load_document(config_path);
        for (const auto& [key, opt] : flags) {
            if (opt->count() > 0) config::set_value(doc, key, values.at(key));
        }
        return doc;
    }
};

enum class DatasetKind { generated, directory, file };

struct Dataset {
    DatasetKind kind = DatasetKind::generated;
    fs::path path;
    data::CsvLayout layout = data::CsvLayout::wide;
    std::vector<fs::path> files;
    std::vector<data::SeriesFrame> frames;
};

Dataset load_dataset(config::RunConfig& cfg, const std::string& override_path) {
    Dataset ds;
    fs::path path = override_path.empty() ? cfg.dataset.path : fs::path(override_path);
    if (cfg.dataset.source == "synthetic" && override_path.empty()) {
        for (auto& s : data::gen_synthetic_detailed(cfg.dataset.synthetic)) ds.frames.push_back(std::move(s.frame));
    } else if (fs::is_directory(path)) {
        ds.kind = DatasetKind::directory;
        ds.path = path;
        json manifest;
        try {
            manifest = json::parse(read_file(path / kDatasetManifest));
            for (const auto& s : manifest.at("series")) ds.files.push_back(s.at("file").get<std::string>());
        } catch (const json::exception& e) {
            throw DataError("malformed dataset manifest in '" + path.string() + "': " + e.what());
        }
        for (const auto& f : ds.files) {
            auto frames = data::load_csv(path / f, data::CsvLayout::wide);
            std::move(frames.begin(), frames.end(), std::back_inserter(ds.frames));
        }
    } else {
        if (path.empty()) throw ValidationError("no dataset given (use --dataset or dataset.path)");
        ds.kind = DatasetKind::file;
        ds.path = path;
        ds.layout = cfg.dataset.layout;
        if (!fs::exists(path)) throw IoError("dataset not found: '" + path.string() + "'");
        ds.frames = data::load_csv(path, ds.layout);
    }
    if (ds.frames.empty()) throw DataError("dataset has no series");
    const std::size_t channels = ds.frames.front().channels();
    for (const auto& f : ds.frames) {
        if (f.channels() != channels) throw DataError("series '" + f.series_id + "' has a different channel count");
    }
    cfg.model.channels = channels;
    cfg.model.validate();
    return ds;
}

eval::PreparedData prepare(const config::RunConfig& cfg, const Dataset& ds) {
    auto data = eval::prepare_windows(ds.frames, cfg.dataset.split, cfg.dataset.eval_stride);
    if (data.train.empty()) throw DataError("no training windows (series too short for window + horizon)");
    return data;
}

void write_report(const eval::ScenarioReport& report, const fs::path& out_dir, std::ostream& out) {
    make_dir(out_dir);
    write_file(out_dir / "report.json", report.to_json());
    std::ostringstream csv;
    report.write_csv(csv);
    write_file(out_dir / "report.csv", csv.str());
    const auto md = report.to_markdown();
    write_file(out_dir / "report.md", md);
    out << md;
}

void log_run(std::ostream& err, const eval::TrainingRun& r) {
    err << "trained " << r.variant << " seed=" << r.seed << " train=" << r.contamination << " epochs=" << r.epochs_run
        << (r.failed ? " FAILED: " + r.error : std::string()) << " (" << std::fixed << std::setprecision(1)
        << r.seconds << "s)\n";
}

int cmd_gen(const CommonOptions& common, const std::string& out_dir, const std::string& manifest_path,
            std::ostream& out) {
    auto doc = common.document();
    if (!manifest_path.empty()) {
        try {
            const auto m = json::parse(read_file(manifest_path));
            const auto& g = m.at("generator");
            for (const auto& key : {"n_series", "length", "channels", "seed", "noise_fraction"}) {
                doc["dataset"][key] = g.at(key);
            }
        } catch (const json::exception& e) {
            throw DataError("malformed dataset manifest '" + manifest_path + "': " + e.what());
        }
    }
    const auto cfg = config::from_document(doc);
    const auto series = data::gen_synthetic_detailed(cfg.dataset.synthetic);
    make_dir(out_dir);
    json manifest;
    const auto& o = cfg.dataset.synthetic;
    manifest["generator"] = {{"kind", "synthetic"},          {"n_series", o.n_series}, {"length", o.length},
                             {"channels", o.channels},       {"seed", o.seed},         {"noise_fraction", o.noise_fraction}};
    manifest["layout"] = "wide";
    json listing = json::array();
    for (const auto& s : series) {
        const std::string file = s.frame.series_id + ".csv";
        std::ostringstream csv;
        data::write_wide_csv(csv, s.frame);
        write_file(fs::path(out_dir) / file, csv.str());
        json channels = json::array();
        for (const auto& c : s.channels) {
            channels.push_back({{"period", c.period},
                                {"phase", c.phase},
                                {"amplitude", c.amplitude},
                                {"slope", c.slope},
                                {"level", c.level},
                                {"noise_sigma", c.noise_sigma}});
        }
        listing.push_back({{"id", s.frame.series_id}, {"file", file}, {"channels", std::move(channels)}});
    }
    manifest["series"] = std::move(listing);
    write_file(fs::path(out_dir) / kDatasetManifest, manifest.dump(2) + "\n");
    out << "wrote " << series.size() << " series to " << out_dir << "\n";
    return 0;
}

int cmd_contaminate(const CommonOptions& common, const std::string& dataset_path, const std::string& out_dir,
                    const std::string& replay_path, std::ostream& out) {
    auto cfg = config::from_document(common.document());
    if (dataset_path.empty() && cfg.dataset.source == "synthetic") {
        throw ValidationError("contaminate needs --dataset (a CSV file or a generated directory)");
    }
    if (replay_path.empty() && cfg.contamination.regime == augment::Regime::none) {
        throw ValidationError("augment.regime must be continuous or pointwise (or pass --replay)");
    }
    auto ds = load_dataset(cfg, dataset_path);
    const std::size_t L = cfg.model.window, H = cfg.model.horizon;

    // Non-overlapping windows tile each train split in normalised space.
    std::vector<data::WindowPair> tiles;
    std::vector<data::NormStats> stats;
    for (std::size_t s = 0; s < ds.frames.size(); ++s) {
        const auto bounds = data::split_bounds(ds.frames[s].length(), cfg.dataset.split);
        stats.push_back(data::fit_normalizer(ds.frames[s], bounds.train));
        const auto frame = data::normalize(ds.frames[s], stats.back());
        auto w = data::windows_in(frame, bounds.train, L, H, L + H, s);
        std::move(w.begin(), w.end(), std::back_inserter(tiles));
    }

    std::vector<augment::ContaminationRecord> manifest;
    std::vector<data::WindowPair> corrupted;
    json m;
    m["regime"] = std::string(augment::to_string(cfg.contamination.regime));
    m["contamination"] = cfg.document.at("augment");
    if (!replay_path.empty()) {
        const auto doc = json::parse(read_file(replay_path), nullptr, false);
        if (doc.is_discarded() || !doc.contains("records")) {
            throw DataError("malformed contamination manifest '" + replay_path + "'");
        }
        manifest = augment::manifest_from_json(doc["records"].dump());
        if (doc.contains("regime")) m["regime"] = doc["regime"];
        if (doc.contains("contamination")) m["contamination"] = doc["contamination"];
        corrupted = augment::replay_contamination(tiles, manifest);
    } else {
        Rng rng = make_rng(cfg.train.seed, 0x636f6e74);
        auto result = augment::contaminate_training_set(tiles, cfg.contamination, rng);
        corrupted = std::move(result.pairs);
        manifest = std::move(result.manifest);
    }

    std::vector<bool> touched(ds.frames.size(), false);
    for (const auto& r : manifest) {
        const auto& w = corrupted[r.index];
        auto& frame = ds.frames[w.origin.series_index];
        Matrix x = w.x, y = w.y;
        data::denormalize_in_place(x, stats[w.origin.series_index]);
        data::denormalize_in_place(y, stats[w.origin.series_index]);
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t c = 0; c < x.cols; ++c) frame.values(w.origin.start + t, c) = x(t, c);
        }
        for (std::size_t t = 0; t < H; ++t) {
            for (std::size_t c = 0; c < y.cols; ++c) frame.values(w.origin.start + L + t, c) = y(t, c);
        }
        touched[w.origin.series_index] = true;
    }

    make_dir(out_dir);
    const fs::path out_path(out_dir);
    if (ds.kind == DatasetKind::directory) {
        for (std::size_t s = 0; s < ds.frames.size(); ++s) {
            if (!touched[s]) {
                write_file(out_path / ds.files[s], read_file(ds.path / ds.files[s]));
                continue;
            }
            std::ostringstream csv;
            data::write_wide_csv(csv, ds.frames[s]);
            write_file(out_path / ds.files[s], csv.str());
        }
        write_file(out_path / kDatasetManifest, read_file(ds.path / kDatasetManifest));
    } else {
        const fs::path target = out_path / ds.path.filename();
        if (manifest.empty()) {
            write_file(target, read_file(ds.path));
        } else {
            std::ostringstream csv;
            if (ds.layout == data::CsvLayout::wide) {
                data::write_wide_csv(csv, ds.frames.front());
            } else {
                data::write_long_csv(csv, ds.frames);
            }
            write_file(target, csv.str());
        }
    }
    m["window"] = L;
    m["horizon"] = H;
    m["tiles"] = tiles.size();
    m["records"] = json::parse(augment::manifest_to_json(manifest));
    write_file(out_path / kContaminationManifest, m.dump(2) + "\n");
    out << "contaminated " << manifest.size() << " of " << tiles.size() << " training tiles into " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOptions& common, const std::string& dataset_path, const std::string& out_dir,
              std::ostream& out, std::ostream& err) {
    auto cfg = config::from_document(common.document());
    const auto ds = load_dataset(cfg, dataset_path);
    const auto data = prepare(cfg, ds);
    if (cfg.train.early_stopping && data.val.empty()) {
        throw ValidationError("early stopping needs validation windows; the validation split is too short");
    }
    make_dir(out_dir);
    const fs::path out_path(out_dir);
    try {
        const auto result = train::train_model(data.train, data.val, cfg.model, cfg.train);
        std::ostringstream log;
        result.log.write_csv(log);
        write_file(out_path / "train_log.csv", log.str());
        json meta;
        meta["config"] = cfg.document;
        meta["training"] = {{"epochs_run", result.epochs_run},
                            {"optimizer_steps", result.optimizer_steps},
                            {"best_epoch", result.best_epoch ? json(*result.best_epoch + 1) : json(nullptr)},
                            {"stopped_early", result.stopped_early},
                            {"train_windows", data.train.size()},
                            {"val_windows", data.val.size()}};
        model::save_checkpoint(out_path / "checkpoint.bin", result.params, meta.dump());
        out << "trained " << result.epochs_run << " epochs (" << result.optimizer_steps << " steps), best epoch "
            << (result.best_epoch ? std::to_string(*result.best_epoch + 1) : std::string("n/a")) << "; wrote "
            << (out_path / "checkpoint.bin").string() << "\n";
    } catch (const train::TrainingDiverged& e) {
        std::ostringstream log;
        e.log().write_csv(log);
        write_file(out_path / "train_log.csv", log.str());
        err << "error: " << e.what() << " at step " << e.step() << "; partial log kept in "
            << (out_path / "train_log.csv").string() << "\n";
        return 2;
    }
    return 0;
}

int cmd_eval(const CommonOptions& common, const std::string& dataset_path, const std::vector<std::string>& checkpoints,
             const std::string& out_dir, std::ostream& out) {
    auto cfg = config::from_document(common.document());
    if (checkpoints.empty()) throw ValidationError("eval needs at least one --checkpoint");
    struct Named {
        std::string name;
        model::ModelParams params;
    };
    std::vector<Named> models;
    for (const auto& spec : checkpoints) {
        std::string name, path = spec;
        if (const auto eq = spec.find('='); eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        } else {
            const fs::path p(spec);
            name = p.stem() == "checkpoint" && p.has_parent_path() ? p.parent_path().filename().string()
                                                                   : p.stem().string();
        }
        for (const auto& m : models) {
            if (m.name == name) throw ValidationError("duplicate checkpoint name '" + name + "' (use name=path)");
        }
        models.push_back({name, model::load_checkpoint(path).params});
    }
    const auto& mc = models.front().params.config;
    for (const auto& m : models) {
        if (m.params.config.window != mc.window || m.params.config.horizon != mc.horizon) {
            throw ValidationError("checkpoints disagree on window/horizon");
        }
    }
    cfg.model.window = mc.window;
    cfg.model.horizon = mc.horizon;
    cfg.dataset.split.window = mc.window;
    cfg.dataset.split.horizon = mc.horizon;
    const auto ds = load_dataset(cfg, dataset_path);
    for (const auto& m : models) {
        if (m.params.config.channels != cfg.model.channels) {
            throw ValidationError("checkpoint '" + m.name + "' expects " + std::to_string(m.params.config.channels) +
                                  " channels, dataset has " + std::to_string(cfg.model.channels));
        }
    }
    const auto data = eval::prepare_windows(ds.frames, cfg.dataset.split, cfg.dataset.eval_stride);
    if (data.test.empty()) throw DataError("no test windows");

    eval::ScenarioReport report;
    report.baseline = models.front().name;
    report.metric_space = cfg.eval.metric_space;
    for (const auto& m : models) {
        for (const auto& cond : cfg.eval.conditions) {
            // A clean test set does not depend on the seed.
            const std::size_t n_seeds = cond.kind == eval::ConditionKind::clean ? 1 : cfg.eval.seeds.size();
            for (std::size_t k = 0; k < n_seeds; ++k) {
                const auto seed = cfg.eval.seeds[k];
                const auto test = eval::apply_condition(data.test, cond, seed);
                report.cells.push_back({m.name, cond.name(), seed, false, {},
                                        eval::evaluate(m.params, test, cfg.eval.metric_space, data.stats)});
            }
        }
    }
    write_report(report, out_dir, out);
    return 0;
}

int cmd_report(const std::vector<std::string>& csvs, const std::string& baseline, const std::string& out_dir,
               std::ostream& out) {
    if (csvs.empty()) throw ValidationError("report needs at least one --csv");
    std::string merged = "variant,scenario,seed,mae,mse,smape\n";
    for (const auto& path : csvs) {
        std::istringstream in(read_file(path));
        std::string line;
        std::getline(in, line);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != "variant,scenario,seed,mae,mse,smape") {
            throw ParseError("'" + path + "' is not a report CSV", 1);
        }
        while (std::getline(in, line)) {
            if (!line.empty()) merged += line + "\n";
        }
    }
    std::istringstream in(merged);
    const auto report = eval::read_report_csv(in, baseline);
    make_dir(out_dir);
    write_file(fs::path(out_dir) / "report.json", report.to_json());
    const auto md = report.to_markdown();
    write_file(fs::path(out_dir) / "report.md", md);
    out << md;
    return 0;
}

int cmd_grid(const CommonOptions& common, const std::string& dataset_path, const std::string& out_dir,
             std::ostream& out, std::ostream& err) {
    auto cfg = config::from_document(common.document());
    const auto ds = load_dataset(cfg, dataset_path);
    const auto data = prepare(cfg, ds);
    eval::GridSpec spec;
    spec.model = cfg.model;
    spec.variants = cfg.variants();
    spec.scenarios = cfg.scenarios();
    spec.seeds = cfg.eval.seeds;
    spec.metric_space = cfg.eval.metric_space;
    spec.threads = cfg.eval.threads;
    spec.on_run_complete = [&err](const eval::TrainingRun& r) { log_run(err, r); };
    write_report(eval::run_scenario_grid(data, spec), out_dir, out);
    return 0;
}

int cmd_sweep(const CommonOptions& common, const std::string& dataset_path, const std::string& out_dir,
              std::ostream& out, std::ostream& err) {
    auto cfg = config::from_document(common.document());
    const auto ds = load_dataset(cfg, dataset_path);
    const auto data = prepare(cfg, ds);
    eval::SweepSpec spec;
    spec.model = cfg.model;
    spec.train = cfg.train;
    spec.lambdas = cfg.eval.lambdas;
    spec.conditions = cfg.eval.conditions;
    spec.seeds = cfg.eval.seeds;
    spec.metric_space = cfg.eval.metric_space;
    spec.threads = cfg.eval.threads;
    spec.on_run_complete = [&err](const eval::TrainingRun& r) { log_run(err, r); };
    const auto rows = eval::lambda_sweep(data, spec);
    make_dir(out_dir);
    std::ostringstream csv;
    eval::write_sweep_csv(csv, rows);
    write_file(fs::path(out_dir) / "sweep.csv", csv.str());
    out << csv.str();
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contrastive time-series forecasting with anomaly injection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "cotsfa 0.1.0");

    std::string dataset, out_dir, manifest, replay, baseline;
    std::vector<std::string> checkpoints, csvs;

    auto* gen = app.add_subcommand("gen", "Generate the synthetic dataset (wide CSV per series + manifest.json)");
    auto* contaminate = app.add_subcommand("contaminate", "Corrupt training-split windows and write a replayable manifest");
    auto* train_cmd = app.add_subcommand("train", "Train one model; writes checkpoint.bin and train_log.csv");
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints under the test conditions");
    auto* report = app.add_subcommand("report", "Re-aggregate report CSVs into JSON and Markdown");
    auto* grid = app.add_subcommand("grid", "Train base and regularised models and evaluate every scenario");
    auto* sweep = app.add_subcommand("sweep", "Train one model per lambda and evaluate the test conditions");

    std::map<CLI::App*, CommonOptions> common;
    for (auto* sub : {gen, contaminate, train_cmd, eval_cmd, report, grid, sweep}) common[sub].attach(sub);

    gen->add_option("-o,--out", out_dir, "Output directory")->required();
    gen->add_option("--manifest", manifest, "Regenerate from an existing dataset manifest");
    contaminate->add_option("-d,--dataset", dataset, "CSV file or generated dataset directory");
    contaminate->add_option("-o,--out", out_dir, "Output directory")->required();
    contaminate->add_option("--replay", replay, "Re-apply a contamination.json instead of sampling");
    for (auto* sub : {train_cmd, eval_cmd, grid, sweep}) {
        sub->add_option("-d,--dataset", dataset, "CSV file or generated dataset directory (default: synthetic in memory)");
        sub->add_option("-o,--out", out_dir, "Output directory")->required();
    }
    eval_cmd->add_option("--checkpoint", checkpoints, "Checkpoint path or name=path; the first is the baseline")
        ->required();
    report->add_option("--csv", csvs, "report.csv files to merge")->required();
    report->add_option("--baseline", baseline, "Baseline variant name (default: base, else the first)");
    report->add_option("-o,--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    auto previous = set_warning_handler([&err](std::string_view msg) { err << "warning: " << msg << "\n"; });
    int code = 0;
    try {
        if (gen->parsed()) {
            code = cmd_gen(common[gen], out_dir, manifest, out);
        } else if (contaminate->parsed()) {
            code = cmd_contaminate(common[contaminate], dataset, out_dir, replay, out);
        } else if (train_cmd->parsed()) {
            code = cmd_train(common[train_cmd], dataset, out_dir, out, err);
        } else if (eval_cmd->parsed()) {
            code = cmd_eval(common[eval_cmd], dataset, checkpoints, out_dir, out);
        } else if (report->parsed()) {
            code = cmd_report(csvs, baseline, out_dir, out);
        } else if (grid->parsed()) {
            code = cmd_grid(common[grid], dataset, out_dir, out, err);
        } else if (sweep->parsed()) {
            code = cmd_sweep(common[sweep], dataset, out_dir, out, err);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        code = 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        code = 2;
    }
    set_warning_handler(std::move(previous));
    return code;
}

}  // namespace cotsfa::cli
