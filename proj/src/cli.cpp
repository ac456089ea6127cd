#include "shopgraph/cli.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "shopgraph/expert.hpp"
#include "shopgraph/formats.hpp"
#include "shopgraph/gantt.hpp"
#include "shopgraph/parallel.hpp"

namespace shopgraph::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) return x;
    } catch (const std::logic_error&) {
    }
    throw UsageError(key + ": expected an integer, got '" + v + "'");
}

int to_int32(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw UsageError(key + ": " + v + " is out of range");
    return static_cast<int>(x);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::logic_error&) {
    }
    throw UsageError(key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    const std::string s = lower(v);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw UsageError(key + ": expected true or false, got '" + v + "'");
}

IntRange to_range(const std::string& key, const std::string& v) {
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
        const std::string inner = v.substr(1, v.size() - 2);
        const auto comma = inner.find(',');
        if (comma == std::string::npos) throw UsageError(key + ": expected [lo, hi], got '" + v + "'");
        return {to_int32(key, trim(inner.substr(0, comma))), to_int32(key, trim(inner.substr(comma + 1)))};
    }
    const int x = to_int32(key, v);
    return {x, x};
}

SearchSpace to_space(const std::string& key, const std::string& v) {
    const std::string s = lower(v);
    if (s == "reachable") return SearchSpace::Reachable;
    if (s == "unrestricted") return SearchSpace::Unrestricted;
    throw UsageError(key + ": expected reachable or unrestricted, got '" + v + "'");
}

void apply_one(PipelineConfig& c, const std::string& key, const std::string& v) {
    GenParams& g = c.gen;
    TrainConfig& t = c.train;
    HgtConfig& m = c.train.model;
    if (key == "gen.kind") {
        const std::string s = lower(v);
        if (s != "jssp" && s != "fjssp") throw UsageError(key + ": expected jssp or fjssp, got '" + v + "'");
        g.kind = s == "jssp" ? ProblemKind::Jssp : ProblemKind::Fjssp;
    } else if (key == "gen.jobs") {
        g.jobs = to_range(key, v);
    } else if (key == "gen.machines") {
        g.machines = to_range(key, v);
    } else if (key == "gen.ops_per_job") {
        g.ops_per_job = to_range(key, v);
    } else if (key == "gen.ops_extra") {
        g.ops_extra = to_range(key, v);
    } else if (key == "gen.machines_per_op") {
        g.machines_per_op = to_range(key, v);
    } else if (key == "gen.mean_time") {
        g.mean_time = to_range(key, v);
    } else if (key == "gen.time") {
        g.time = to_range(key, v);
    } else if (key == "gen.deviation") {
        g.deviation = to_double(key, v);
    } else if (key == "env.visible_ops_per_job") {
        c.env.visible_ops_per_job = to_int32(key, v);
    } else if (key == "env.mask_factor") {
        c.env.mask_factor = to_double(key, v);
    } else if (key == "env.normalize_features") {
        c.env.normalize_features = to_bool(key, v);
    } else if (key == "branch.branches_per_instance") {
        c.branch.branches_per_instance = to_int32(key, v);
    } else if (key == "branch.random_action_probability") {
        c.branch.random_action_probability = to_double(key, v);
    } else if (key == "branch.segment_length") {
        c.branch.segment_length = to_range(key, v);
    } else if (key == "dataset.space") {
        c.space = to_space(key, v);
    } else if (key == "dataset.node_limit") {
        c.node_limit = to_int(key, v);
    } else if (key == "train.epochs") {
        t.epochs = to_int32(key, v);
    } else if (key == "train.batch_size") {
        t.batch_size = to_int32(key, v);
    } else if (key == "train.lr") {
        t.lr = to_double(key, v);
    } else if (key == "train.gamma") {
        t.gamma = to_double(key, v);
    } else if (key == "train.lambda_rl") {
        t.lambda_rl = to_double(key, v);
    } else if (key == "train.lambda_bc") {
        t.lambda_bc = to_double(key, v);
    } else if (key == "train.policy_delay") {
        t.policy_delay = to_int32(key, v);
    } else if (key == "train.tau") {
        t.tau = to_double(key, v);
    } else if (key == "train.scale_rewards") {
        t.scale_rewards = to_bool(key, v);
    } else if (key == "model.layers") {
        m.layers = to_int32(key, v);
    } else if (key == "model.heads") {
        m.heads = to_int32(key, v);
    } else if (key == "model.hidden") {
        m.hidden = to_int32(key, v);
    } else if (key == "model.mlp_layers") {
        m.mlp_layers = to_int32(key, v);
    } else if (key == "model.slope") {
        m.slope = to_double(key, v);
    } else if (key == "model.share_encoder") {
        m.share_encoder = to_bool(key, v);
    } else {
        throw UsageError("unknown setting '" + key + "'");
    }
}

void validate_config(const PipelineConfig& c) {
    try {
        c.env.validate();
        c.branch.validate();
        c.train.validate();
        if (c.node_limit < 1) throw std::invalid_argument("dataset.node_limit must be >= 1");
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

// Options shared by commands that read the pipeline config.
struct ConfigFlags {
    std::string config_file;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    int jobs = 1;

    void add_to(CLI::App* app, bool with_seed, bool with_jobs) {
        app->add_option("--config", config_file, "key=value config file; flags override it");
        app->add_option("--set", sets, "Override one setting, e.g. --set train.epochs=5")->allow_extra_args(false);
        if (with_seed) app->add_option("--seed", seed, "Seed for all randomness");
        if (with_jobs) app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    }

    std::map<std::string, std::string> settings() const {
        std::map<std::string, std::string> s;
        if (!config_file.empty()) {
            if (!fs::is_regular_file(config_file)) throw UsageError("--config: no such file '" + config_file + "'");
            s = parse_settings(read_text_file(config_file));
        }
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
            s[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
        }
        return s;
    }
};

void require_file(const std::string& path, const std::string& flag) {
    if (!fs::is_regular_file(path)) throw UsageError(flag + ": no such file '" + path + "'");
}

void require_dir(const std::string& path, const std::string& flag) {
    if (!fs::is_directory(path)) throw UsageError(flag + ": no such directory '" + path + "'");
}

void require_output(const std::string& path, const std::string& flag, const std::vector<std::string>& inputs) {
    const fs::path p(path);
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw UsageError(flag + ": directory '" + parent.string() + "' does not exist");
    if (fs::is_directory(p)) throw UsageError(flag + ": '" + path + "' is a directory");
    for (const auto& in : inputs)
        if (!in.empty() && fs::exists(p) && fs::exists(in) && fs::equivalent(p, in))
            throw UsageError(flag + ": '" + path + "' would overwrite an input");
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty())
        out << text;
    else
        write_text_file(path, text);
}

std::vector<Instance> load_all(const std::vector<fs::path>& files) {
    std::vector<Instance> out;
    for (const auto& f : files) out.push_back(load_instance(f));
    return out;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

std::map<std::string, Time> solve_references(const std::vector<Instance>& instances, std::int64_t node_limit,
                                             int threads, std::ostream& err) {
    std::vector<SolveResult> solved(instances.size());
    parallel_for(static_cast<int>(instances.size()), threads, [&](int i) {
        solved[static_cast<std::size_t>(i)] = solve_exact(instances[static_cast<std::size_t>(i)], node_limit);
    });
    std::map<std::string, Time> refs;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (solved[i].optimal)
            refs[instances[i].name()] = solved[i].makespan;
        else
            err << "warning: '" << instances[i].name() << "' not solved to optimality within the node limit, no reference\n";
    }
    return refs;
}

struct GenerateInstances {
    ConfigFlags flags;
    std::string preset;
    int count = 0;
    std::string out_dir;
    std::string prefix = "inst";
    std::string refs;

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("generate-instances", "Sample random instances from a preset");
        flags.add_to(c, true, true);
        c->add_option("--preset", preset, "jssp-paper, fjssp-paper, jssp-desk or fjssp-desk (default fjssp-desk)");
        c->add_option("--count", count, "Number of instances")->required()->check(CLI::NonNegativeNumber);
        c->add_option("--out", out_dir, "Output directory (created if missing)")->required();
        c->add_option("--prefix", prefix, "File name prefix");
        c->add_option("--refs", refs, "Also solve every instance exactly and write refs.csv here");
    }

    int run(std::ostream& out, std::ostream& err) {
        auto settings = flags.settings();
        if (!preset.empty()) settings["gen.preset"] = preset;
        PipelineConfig cfg;
        apply_settings(cfg, settings);
        validate_config(cfg);
        if (fs::exists(out_dir) && !fs::is_directory(out_dir))
            throw UsageError("--out: '" + out_dir + "' is not a directory");
        if (!refs.empty()) require_output(refs, "--refs", {});
        fs::create_directories(out_dir);

        std::vector<Instance> made;
        const int width = std::max<int>(3, static_cast<int>(std::to_string(std::max(count - 1, 0)).size()));
        for (int i = 0; i < count; ++i) {
            std::string index = std::to_string(i);
            index.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(index.size()))), '0');
            Rng rng(derive_seed(flags.seed, static_cast<std::uint64_t>(i)));
            auto g = generate_instance(rng, cfg.gen, prefix + index);
            for (const auto& note : g.notes) err << "note: " << g.instance.name() << ": " << note << "\n";
            write_text_file(fs::path(out_dir) / (g.instance.name() + ".fjs"), serialize_fjssp(g.instance));
            made.push_back(std::move(g.instance));
        }
        out << "wrote " << count << " instances to " << out_dir << "\n";
        if (!refs.empty()) {
            const auto r = solve_references(made, cfg.node_limit, flags.jobs, err);
            write_text_file(refs, refs_to_csv(r));
            out << "wrote " << r.size() << " references to " << refs << "\n";
        }
        return kExitOk;
    }
};

struct GenerateDataset {
    ConfigFlags flags;
    std::vector<std::string> inputs;
    std::string out_file;
    std::string refs;

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("generate-dataset", "Label instances with the expert and add random branches");
        flags.add_to(c, true, true);
        c->add_option("inputs", inputs, "Instance files or directories")->required();
        c->add_option("--out", out_file, "Dataset file (JSON lines)")->required();
        c->add_option("--refs", refs, "Also write expert makespans of optimally labeled instances as refs.csv");
    }

    int run(std::ostream& out, std::ostream& err) {
        PipelineConfig cfg;
        apply_settings(cfg, flags.settings());
        validate_config(cfg);
        std::vector<fs::path> files;
        for (const auto& in : inputs) {
            if (fs::is_directory(in)) {
                const auto more = instance_files(in);
                files.insert(files.end(), more.begin(), more.end());
            } else {
                require_file(in, "inputs");
                files.emplace_back(in);
            }
        }
        if (files.empty()) throw UsageError("no instance files found");
        std::vector<std::string> in_strings;
        for (const auto& f : files) in_strings.push_back(f.string());
        require_output(out_file, "--out", in_strings);
        if (!refs.empty()) require_output(refs, "--refs", in_strings);

        DatasetOptions opt;
        opt.env = cfg.env;
        opt.branch = cfg.branch;
        opt.space = cfg.space;
        opt.node_limit = cfg.node_limit;
        opt.threads = flags.jobs;
        const Dataset ds = generate_dataset(load_all(files), opt, flags.seed);
        for (const auto& note : ds.notes) err << "note: " << note << "\n";
        save_dataset(ds, out_file);
        int expert = 0;
        for (const auto& t : ds.transitions) expert += t.delta;
        out << "instances " << ds.instances.size() << ", transitions " << ds.transitions.size() << " (" << expert
            << " expert)\n";
        if (!refs.empty()) {
            std::map<std::string, Time> r;
            for (const auto& d : ds.instances)
                if (d.expert_optimal) r[d.instance->name()] = d.expert_makespan;
            write_text_file(refs, refs_to_csv(r));
        }
        return kExitOk;
    }
};

std::vector<EvalItem> eval_items(const std::string& dir, const std::string& refs_file, std::ostream& err) {
    const auto refs = parse_refs(read_text_file(refs_file));
    std::vector<EvalItem> items;
    for (const auto& f : instance_files(dir)) {
        auto inst = std::make_shared<const Instance>(load_instance(f));
        const auto it = refs.find(inst->name());
        items.push_back({inst, it == refs.end() ? 0 : it->second});
    }
    if (items.empty()) err << "warning: no instance files in '" << dir << "'\n";
    return items;
}

struct Train {
    ConfigFlags flags;
    std::string dataset;
    std::string out_file;
    std::string metrics;
    std::string val_dir;
    std::string val_refs;
    std::optional<int> epochs;
    std::optional<double> lambda_rl;
    std::optional<double> lambda_bc;

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("train", "Train actor and critics on an offline dataset");
        flags.add_to(c, true, true);
        c->add_option("--dataset", dataset, "Dataset file")->required();
        c->add_option("--out", out_file, "Checkpoint to write")->required();
        c->add_option("--metrics", metrics, "Per-epoch metrics CSV");
        c->add_option("--val-dir", val_dir, "Validation instances");
        c->add_option("--val-refs", val_refs, "refs.csv for the validation instances");
        c->add_option("--epochs", epochs, "Overrides train.epochs");
        c->add_option("--lambda-rl", lambda_rl, "Overrides train.lambda_rl");
        c->add_option("--lambda-bc", lambda_bc, "Overrides train.lambda_bc");
    }

    int run(std::ostream& out, std::ostream& err) {
        PipelineConfig cfg;
        apply_settings(cfg, flags.settings());
        if (epochs) cfg.train.epochs = *epochs;
        if (lambda_rl) cfg.train.lambda_rl = *lambda_rl;
        if (lambda_bc) cfg.train.lambda_bc = *lambda_bc;
        cfg.train.seed = flags.seed;
        validate_config(cfg);
        require_file(dataset, "--dataset");
        require_output(out_file, "--out", {dataset});
        if (!metrics.empty()) require_output(metrics, "--metrics", {dataset});
        if (val_dir.empty() != val_refs.empty()) throw UsageError("--val-dir and --val-refs go together");
        if (!val_dir.empty()) {
            require_dir(val_dir, "--val-dir");
            require_file(val_refs, "--val-refs");
        }

        const Dataset ds = load_dataset(dataset);
        const auto validation = val_dir.empty() ? std::vector<EvalItem>{} : eval_items(val_dir, val_refs, err);
        const TrainResult r = train(ds, cfg.train, validation, [&](const EpochMetrics& m) {
            out << "epoch " << m.epoch << " critic_loss " << fmt(m.critic_loss) << " actor_loss " << fmt(m.actor_loss)
                << " kl " << fmt(m.kl) << " mean_q " << fmt(m.mean_q) << " val_gap " << fmt(m.val_gap) << std::endl;
        });
        save_checkpoint(training_checkpoint(r.nets.online, ds.env, cfg.train), out_file);
        if (!metrics.empty()) write_text_file(metrics, metrics_to_csv(r.metrics));
        if (r.diverged) {
            err << "error: training diverged (" << r.message << "); wrote the last good checkpoint\n";
            return kExitRuntime;
        }
        out << "wrote " << out_file << "\n";
        return kExitOk;
    }
};

struct Evaluate {
    ConfigFlags flags;
    std::string checkpoint;
    std::string dir;
    std::string refs;
    std::string out_file;
    std::string method = "policy";

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("evaluate", "Optimal gaps of greedy decoding against references");
        flags.add_to(c, true, true);
        c->add_option("--checkpoint", checkpoint, "Trained checkpoint");
        c->add_option("--dir", dir, "Directory of instances")->required();
        c->add_option("--refs", refs, "refs.csv with best-known makespans")->required();
        c->add_option("--out", out_file, "Gap CSV (default: standard output)");
        c->add_option("--method", method, "policy or random")->check(CLI::IsMember({"policy", "random"}));
    }

    int run(std::ostream& out, std::ostream& err) {
        PipelineConfig cfg;
        apply_settings(cfg, flags.settings());
        validate_config(cfg);
        require_dir(dir, "--dir");
        require_file(refs, "--refs");
        if (method == "policy") {
            if (checkpoint.empty()) throw UsageError("--checkpoint is required for --method policy");
            require_file(checkpoint, "--checkpoint");
        }
        if (!out_file.empty()) require_output(out_file, "--out", {refs, checkpoint});

        const auto items = eval_items(dir, refs, err);
        GapTable table;
        if (method == "policy") {
            EnvParams env;
            const Networks nets = networks_from_checkpoint(load_checkpoint(checkpoint), &env);
            table = evaluate(nets, items, env, flags.jobs);
        } else {
            table = evaluate_random_policy(items, cfg.env, flags.seed);
        }
        for (const auto& w : table.warnings) err << "warning: " << w << "\n";
        write_or_print(out_file, gap_table_to_csv(table), out);
        return kExitOk;
    }
};

struct Solve {
    ConfigFlags flags;
    std::string instance;
    std::string checkpoint;
    std::string method = "policy";
    std::string out_file;
    std::string gantt;

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("solve", "Schedule one instance");
        flags.add_to(c, false, false);
        c->add_option("--instance", instance, "Instance file")->required();
        c->add_option("--checkpoint", checkpoint, "Trained checkpoint (method policy)");
        c->add_option("--method", method, "policy, exact, spt or mwkr")
            ->check(CLI::IsMember({"policy", "exact", "spt", "mwkr"}));
        c->add_option("--out", out_file, "Schedule JSON (default: standard output)");
        c->add_option("--gantt", gantt, "Also render an SVG Gantt chart");
    }

    int run(std::ostream& out, std::ostream& err) {
        PipelineConfig cfg;
        apply_settings(cfg, flags.settings());
        validate_config(cfg);
        require_file(instance, "--instance");
        if (method == "policy") {
            if (checkpoint.empty()) throw UsageError("--checkpoint is required for --method policy");
            require_file(checkpoint, "--checkpoint");
        }
        if (!out_file.empty()) require_output(out_file, "--out", {instance, checkpoint});
        if (!gantt.empty()) require_output(gantt, "--gantt", {instance, checkpoint});

        const auto inst = std::make_shared<const Instance>(load_instance(instance));
        Schedule s;
        if (method == "policy") {
            EnvParams env;
            const Networks nets = networks_from_checkpoint(load_checkpoint(checkpoint), &env);
            s = greedy_decode(inst, nets, env);
        } else if (method == "exact") {
            const SolveResult r = solve_exact(*inst, cfg.node_limit);
            if (!r.optimal) err << "warning: node limit reached, schedule may not be optimal\n";
            s = r.schedule;
        } else {
            s = solve_dispatch(*inst, method == "spt" ? DispatchRule::Spt : DispatchRule::Mwkr, cfg.env);
        }
        const auto violations = validate_schedule(*inst, s);
        if (!violations.empty())
            throw std::logic_error("produced schedule is infeasible: " + std::string(to_string(violations[0].kind)) +
                                   " " + violations[0].detail);
        write_or_print(out_file, schedule_to_json(*inst, s) + "\n", out);
        if (!gantt.empty()) write_text_file(gantt, render_gantt(*inst, s));
        if (!out_file.empty()) out << "makespan " << makespan(*inst, s) << "\n";
        return kExitOk;
    }
};

struct Gantt {
    std::string instance;
    std::string schedule;
    std::string out_file;

    void add(CLI::App& app) {
        CLI::App* c = app.add_subcommand("gantt", "Render a schedule as an SVG Gantt chart");
        c->add_option("--instance", instance, "Instance file")->required();
        c->add_option("--schedule", schedule, "Schedule JSON")->required();
        c->add_option("--out", out_file, "SVG file")->required();
    }

    int run(std::ostream& out, std::ostream&) {
        require_file(instance, "--instance");
        require_file(schedule, "--schedule");
        require_output(out_file, "--out", {instance, schedule});
        const Instance inst = load_instance(instance);
        const Schedule s = schedule_from_json(read_text_file(schedule));
        const auto violations = validate_schedule(inst, s);
        if (!violations.empty())
            throw std::runtime_error("schedule is infeasible: " + std::string(to_string(violations[0].kind)) + " " +
                                     violations[0].detail);
        write_text_file(out_file, render_gantt(inst, s));
        out << "wrote " << out_file << "\n";
        return kExitOk;
    }
};

}  // namespace

std::map<std::string, std::string> parse_settings(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string s = trim(line);
        if (s.empty()) continue;
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (s.front() == '[' && s.back() == ']' && s.find('=') == std::string::npos) {
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw UsageError(where + "empty section name");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError(where + "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw UsageError(where + "missing key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

void apply_settings(PipelineConfig& config, const std::map<std::string, std::string>& settings) {
    if (const auto it = settings.find("gen.preset"); it != settings.end()) {
        try {
            config.gen = GenParams::preset(it->second);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("gen.preset: ") + e.what());
        }
    }
    for (const auto& [key, value] : settings)
        if (key != "gen.preset") apply_one(config, key, value);
}

std::map<std::string, Time> parse_refs(std::string_view text) {
    std::map<std::string, Time> refs;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (trim(line) != "instance,best_known")
                throw std::runtime_error("refs: expected header 'instance,best_known', got '" + line + "'");
            continue;
        }
        if (trim(line).empty()) continue;
        const auto comma = line.find(',');
        const std::string where = "refs line " + std::to_string(line_no) + ": ";
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw std::runtime_error(where + "expected instance,best_known");
        const std::string name = trim(line.substr(0, comma));
        const std::string value = trim(line.substr(comma + 1));
        long long v = 0;
        try {
            v = to_int("refs", value);
        } catch (const UsageError&) {
            throw std::runtime_error(where + "'" + value + "' is not an integer makespan");
        }
        if (v <= 0) throw std::runtime_error(where + "makespan must be positive");
        if (!refs.emplace(name, v).second) throw std::runtime_error(where + "duplicate instance '" + name + "'");
    }
    if (line_no == 0) throw std::runtime_error("refs: empty file");
    return refs;
}

std::string refs_to_csv(const std::map<std::string, Time>& refs) {
    std::string out = "instance,best_known\n";
    for (const auto& [name, v] : refs) out += name + "," + std::to_string(v) + "\n";
    return out;
}

std::vector<fs::path> instance_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower(e.path().extension().string());
        if (ext == ".fjs" || ext == ".txt" || ext == ".jss" || ext == ".jsp" || ext.empty()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Offline-RL scheduling pipeline", "shopgraph"};
    app.require_subcommand(1, 1);
    GenerateInstances gen_instances;
    GenerateDataset gen_dataset;
    Train train_cmd;
    Evaluate evaluate_cmd;
    Solve solve_cmd;
    Gantt gantt_cmd;
    gen_instances.add(app);
    gen_dataset.add(app);
    train_cmd.add(app);
    evaluate_cmd.add(app);
    solve_cmd.add(app);
    gantt_cmd.add(app);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const auto parsed = app.get_subcommands();
        err << "error: " << e.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
        return kExitUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "generate-instances") return gen_instances.run(out, err);
        if (name == "generate-dataset") return gen_dataset.run(out, err);
        if (name == "train") return train_cmd.run(out, err);
        if (name == "evaluate") return evaluate_cmd.run(out, err);
        if (name == "solve") return solve_cmd.run(out, err);
        return gantt_cmd.run(out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace shopgraph::cli
