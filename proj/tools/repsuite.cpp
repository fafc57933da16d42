#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "repsuite/repsuite.hpp"

namespace fs = std::filesystem;
using namespace repsuite;

namespace {

std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw Error(ErrorKind::Io, "error reading " + path.string());
    }
    return buf.str();
}

json read_json(const fs::path &path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

Catalog load_catalog(const fs::path &path) {
    try {
        return parse_catalog(read_text(path));
    } catch (const Error &e) {
        if (e.kind() == ErrorKind::Io) {
            throw;
        }
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

SurveyData load_human(const fs::path &path, const Catalog &catalog, const HumanCsvOptions &options) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot read " + path.string());
    }
    try {
        return parse_human_table(in, catalog, options);
    } catch (const Error &e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

SimulationLog load_logs(const std::vector<fs::path> &paths, const Catalog &catalog) {
    SimulationLog all;
    for (const auto &path : paths) {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorKind::Io, "cannot read " + path.string());
        }
        SimulationLog log;
        try {
            log = parse_simulation_log(in, catalog);
        } catch (const Error &e) {
            throw Error(e.kind(), path.string() + ": " + e.what());
        }
        all.malformed += log.malformed;
        for (auto &w : log.warnings) {
            all.warnings.push_back(path.string() + ": " + w);
        }
        all.samples.insert(all.samples.end(), std::make_move_iterator(log.samples.begin()),
                           std::make_move_iterator(log.samples.end()));
    }
    return all;
}

std::vector<Level> parse_levels(const std::string &level) {
    if (level == "question") {
        return {Level::Question};
    }
    if (level == "topic") {
        return {Level::Topic};
    }
    return {Level::Question, Level::Topic};
}

int exit_code(const Error &e) { return e.kind() == ErrorKind::Io ? 2 : 1; }

struct CommonInputs {
    fs::path catalog;
    fs::path human;
    std::vector<fs::path> logs;
    fs::path out = "out";
    std::string level = "question";
    std::size_t bounds = 0;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    HumanCsvOptions csv;
};

int run_validate(const CommonInputs &in) {
    Catalog catalog;
    try {
        catalog = load_catalog(in.catalog);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
    const auto violations = validate_catalog(catalog);
    for (const auto &v : violations) {
        std::cout << in.catalog.string() << ": " << v.code << ": " << v.message << '\n';
    }
    if (!violations.empty()) {
        return 1;
    }
    try {
        if (!in.human.empty()) {
            const auto data = load_human(in.human, catalog, in.csv);
            std::cout << in.human.string() << ": " << data.size() << " respondents\n";
        }
        if (!in.logs.empty()) {
            const auto log = load_logs(in.logs, catalog);
            for (const auto &w : log.warnings) {
                std::cout << "warning: " << w << '\n';
            }
            std::cout << "logs: " << log.samples.size() << " records, " << log.malformed << " malformed\n";
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
    std::cout << "ok\n";
    return 0;
}

int run_evaluate(const CommonInputs &in, bool bounds_only) {
    const auto catalog = load_catalog(in.catalog);
    if (const auto violations = validate_catalog(catalog); !violations.empty()) {
        throw Error(ErrorKind::Config, in.catalog.string() + ": " + violations.front().message);
    }
    const auto human = load_human(in.human, catalog, in.csv);
    SimulationLog log;
    if (!bounds_only) {
        log = load_logs(in.logs, catalog);
    }
    EvaluateOptions options;
    options.levels = parse_levels(in.level);
    options.bounds_iterations = in.bounds;
    options.seed = in.seed;
    options.workers = in.workers;
    auto report = evaluate(catalog, human, log.samples, options);
    for (auto &w : log.warnings) {
        report.warnings.push_back(w);
    }
    const auto written = write_report(report, in.out);
    for (const auto &w : report.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    for (const auto &ls : report.structure) {
        std::cout << to_string(ls.level) << " level:";
        for (const auto &s : ls.series) {
            std::cout << ' ' << s.series << " rho=";
            if (s.correlation && s.correlation->comparison && s.correlation->comparison->rho) {
                std::cout << *s.correlation->comparison->rho;
            } else {
                std::cout << "n/a";
            }
        }
        if (ls.lower && ls.lower->rho.mean) {
            std::cout << " lower=" << *ls.lower->rho.mean;
        }
        if (ls.upper && ls.upper->rho.mean) {
            std::cout << " upper=" << *ls.upper->rho.mean;
        }
        std::cout << '\n';
    }
    for (const auto &p : written) {
        std::cout << "wrote " << p.string() << '\n';
    }
    return 0;
}

struct SynthArgs {
    fs::path config;
    fs::path out = "fixture";
    std::optional<std::uint64_t> seed;
    std::size_t samples = 0;
};

int run_synth(const SynthArgs &args) {
    SynthConfig config;
    if (!args.config.empty()) {
        try {
            config = read_json(args.config).get<SynthConfig>();
        } catch (const json::exception &e) {
            throw Error(ErrorKind::Config, args.config.string() + ": " + e.what());
        }
    }
    config.seed = *args.seed;
    const auto population = generate_population(config);
    fs::create_directories(args.out);
    {
        std::ofstream out(args.out / "catalog.json");
        out << json(population.catalog).dump(2) << '\n';
    }
    {
        std::ofstream out(args.out / "human.csv");
        write_human_table(out, population.data, {"group"});
    }
    {
        std::ofstream out(args.out / "synth_config.json");
        out << json(config).dump(2) << '\n';
    }
    std::cout << "wrote " << (args.out / "catalog.json").string() << ", " << (args.out / "human.csv").string() << '\n';
    if (args.samples > 0) {
        std::ofstream out(args.out / "logs.ndjson");
        for (const bool shuffled : {false, true}) {
            const auto block =
                fixture_generations(population, shuffled ? "shuffled" : "perfect", args.samples, config.seed, shuffled);
            for (const auto &g : block) {
                out << json(g).dump() << '\n';
            }
        }
        std::cout << "wrote " << (args.out / "logs.ndjson").string() << '\n';
    }
    return 0;
}

struct SimulateArgs {
    fs::path config;
    std::optional<double> temperature;
    std::optional<double> flip_fraction;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool resume = false;
};

int run_simulate(const SimulateArgs &args) {
    const auto j = read_json(args.config);
    const auto base = args.config.parent_path();
    const auto resolve = [&](const std::string &p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    SamplerConfig config;
    json sampler = j;
    if (args.seed) {
        sampler["seed"] = *args.seed;
    }
    try {
        config = sampler.get<SamplerConfig>();
    } catch (const json::exception &e) {
        throw Error(ErrorKind::Config, args.config.string() + ": " + e.what());
    }
    if (args.temperature) {
        config.temperature = *args.temperature;
    }
    if (args.flip_fraction) {
        config.flip_fraction = *args.flip_fraction;
    }
    if (args.workers) {
        config.max_in_flight = *args.workers;
    }
    config.validate();
    const auto token = resolve_auth_token(config);
    if (!j.contains("catalog") || !j.contains("log") || !j.contains("models")) {
        throw Error(ErrorKind::Config, "simulation config needs catalog, log and models");
    }
    const auto catalog = load_catalog(resolve(j.at("catalog").get<std::string>()));
    const auto log = resolve(j.at("log").get<std::string>());
    const auto models = j.at("models").get<std::vector<ModelSpec>>();
    const auto questions = j.value("questions", std::vector<std::string>{});
    if (fs::exists(log) && fs::file_size(log) > 0 && !args.resume) {
        throw Error(ErrorKind::Config, log.string() + " already exists; pass --resume to continue it");
    }
    HttpChatTransport transport(config.endpoint, token, config.timeout_s);
    const auto summary = run_simulation(config, catalog, models, log, transport, &std::cerr, questions);
    for (const auto &w : summary.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    std::cout << summary.records_written << " records written, " << summary.blocks_skipped
              << " blocks already complete, " << summary.transport_failures << " transport failures\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Representativeness evaluation for simulated survey responses"};
    app.require_subcommand(1);

    CommonInputs validate_in;
    auto *validate_cmd = app.add_subcommand("validate", "Check a catalog and optionally dry-run ingestion");
    validate_cmd->add_option("--catalog", validate_in.catalog, "Catalog JSON")->required();
    validate_cmd->add_option("--human", validate_in.human, "Human response CSV");
    validate_cmd->add_option("--logs", validate_in.logs, "Simulation log files");

    CommonInputs eval_in;
    auto *eval_cmd = app.add_subcommand("evaluate", "Compute the evaluation report");
    CommonInputs bounds_in;
    auto *bounds_cmd = app.add_subcommand("bounds", "Compute calibration bounds only");
    for (auto [cmd, in] : {std::pair{eval_cmd, &eval_in}, std::pair{bounds_cmd, &bounds_in}}) {
        cmd->add_option("--catalog", in->catalog, "Catalog JSON")->required();
        cmd->add_option("--human", in->human, "Human response CSV")->required();
        cmd->add_option("--out", in->out, "Output directory")->capture_default_str();
        cmd->add_option("--level", in->level, "Structure level")
            ->check(CLI::IsMember({"question", "topic", "both"}))
            ->capture_default_str();
        cmd->add_option("--seed", in->seed, "Seed for resampling");
        cmd->add_option("--workers", in->workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--id-column", in->csv.id_column, "Respondent id column")->capture_default_str();
        cmd->add_option("--weight-column", in->csv.weight_column, "Survey weight column")->capture_default_str();
    }
    eval_cmd->add_option("--logs", eval_in.logs, "Simulation log files")->required();
    eval_cmd->add_option("--bounds", eval_in.bounds, "Resampling iterations for calibration bounds");
    bounds_cmd->add_option("--bounds", bounds_in.bounds, "Resampling iterations")->required()->check(
        CLI::PositiveNumber);
    bounds_cmd->get_option("--seed")->required();

    SynthArgs synth_args;
    auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic fixture");
    synth_cmd->add_option("--config", synth_args.config, "Synthetic population config JSON");
    synth_cmd->add_option("--out", synth_args.out, "Output directory")->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.seed, "Seed")->required();
    synth_cmd->add_option("--samples", synth_args.samples,
                          "Also write logs for perfect and shuffled steered models, n per question");

    SimulateArgs sim_args;
    auto *sim_cmd = app.add_subcommand("simulate", "Sample a chat endpoint into a simulation log");
    sim_cmd->add_option("--config", sim_args.config, "Simulation config JSON")->required();
    sim_cmd->add_option("--temperature", sim_args.temperature, "Sampling temperature");
    sim_cmd->add_option("--flip-fraction", sim_args.flip_fraction, "Share of samples with a reversed scale");
    sim_cmd->add_option("--seed", sim_args.seed, "Seed (overrides the config)");
    sim_cmd->add_option("--workers", sim_args.workers, "Concurrent requests")->check(CLI::PositiveNumber);
    sim_cmd->add_flag("--resume", sim_args.resume, "Continue an existing log");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) {
            return run_validate(validate_in);
        }
        if (eval_cmd->parsed()) {
            if (eval_in.bounds > 0 && !eval_in.seed) {
                throw Error(ErrorKind::Config, "--bounds needs an explicit --seed");
            }
            return run_evaluate(eval_in, false);
        }
        if (bounds_cmd->parsed()) {
            return run_evaluate(bounds_in, true);
        }
        if (synth_cmd->parsed()) {
            return run_synth(synth_args);
        }
        if (sim_cmd->parsed()) {
            return run_simulate(sim_args);
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
