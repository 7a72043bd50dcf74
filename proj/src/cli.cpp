#include "liftkb/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "liftkb/errors.hpp"
#include "liftkb/evaluation.hpp"
#include "liftkb/kb.hpp"
#include "liftkb/model.hpp"
#include "liftkb/rule_miner.hpp"
#include "liftkb/synthetic.hpp"
#include "liftkb/trainer.hpp"

namespace liftkb::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kEngineVersion = "liftkb 0.1.0";

constexpr const char* kCsvHelp = R"(Output files:
  train    <out>/checkpoint.txt     k <dim>; R <relation> <k reals>; E <tuple> <k pre-activations>
           <out>/checkpoint.adam.txt  k <dim>; step <n>; MR/VR/ME/VE <name> <k reals>
           <out>/metrics.csv        epoch,recon,l2,implication,total,seconds
                                    (per-batch means; seconds is wall clock)
           <out>/manifest.json      resolved flags, input sha256 digests, engine version
  eval     CSV kind,relation,test_facts,average_precision
           one 'relation' row per test relation, then a 'summary' row whose
           relation column is 'weighted_map' and whose value is the
           test-fact-weighted MAP
  mine     rule file 'antecedent<TAB>=><TAB>consequent' per line
  analyze asymmetry  CSV antecedent,consequent,mean_forward,mean_backward,
           forward_tuples,backward_tuples; mean_forward averages
           sigmoid(score(consequent,t)) over training tuples t of the
           antecedent, mean_backward the reverse; last row holds the means
           over all rules with data
  analyze matrix     CSV dimension,<relation>...; one column per relation named
           in a rule, columns and dimensions sorted by ascending L1 norm
  analyze zeroshot   CSV fraction,weighted_map
Every output is accompanied by <output>.manifest.json (train: manifest.json).
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.)";

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        static constexpr char digits[] = "0123456789abcdef";
        hex << digits[digest[i] >> 4] << digits[digest[i] & 0xF];
    }
    return hex.str();
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void report_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// Flags shared by train and analyze zeroshot.
struct TrainingFlags {
    std::string variant = "fs";
    ModelConfig config;
    TrainOptions options;

    void add_to(CLI::App& app) {
        app.add_option("--variant", variant, "Model variant: f, fs or fsl")->capture_default_str();
        app.add_option("--k", config.k, "Embedding dimension")->capture_default_str();
        app.add_option("--alpha", config.alpha, "L2 weight")->capture_default_str();
        app.add_option("--beta-tilde", config.beta_tilde, "Weight of the summed lifted rule losses")
            ->capture_default_str();
        app.add_option("--delta", config.delta, "Implication hinge margin")->capture_default_str();
        app.add_option("--init-low", config.init_low, "Uniform init lower bound")->capture_default_str();
        app.add_option("--init-high", config.init_high, "Uniform init upper bound")->capture_default_str();
        app.add_option("--lr", options.learning_rate, "Adam learning rate")->capture_default_str();
        app.add_option("--batch-size", options.batch_size, "Positive facts per mini-batch")->capture_default_str();
        app.add_option("--epochs", options.epochs, "Passes over the training facts")->required();
        app.add_option("--seed", options.seed, "Random seed")->capture_default_str();
        app.add_option("--adam-beta1", options.adam_beta1)->capture_default_str();
        app.add_option("--adam-beta2", options.adam_beta2)->capture_default_str();
        app.add_option("--adam-epsilon", options.adam_epsilon)->capture_default_str();
        app.add_option("--workers", options.workers,
                       "Threads for the batch gradient; >1 changes floating-point summation order")
            ->capture_default_str();
    }

    void resolve() {
        const auto v = parse_variant(variant);
        if (!v) throw UsageError("unknown variant '" + variant + "' (expected f, fs or fsl)");
        config.variant = *v;
        config.validate();
        options.validate();
    }

    ordered_json to_json() const {
        return {{"config",
                 {{"k", config.k},
                  {"alpha", config.alpha},
                  {"beta_tilde", config.beta_tilde},
                  {"delta", config.delta},
                  {"variant", std::string(to_string(config.variant))},
                  {"init_low", config.init_low},
                  {"init_high", config.init_high}}},
                {"options",
                 {{"learning_rate", options.learning_rate},
                  {"batch_size", options.batch_size},
                  {"epochs", options.epochs},
                  {"seed", options.seed},
                  {"adam_beta1", options.adam_beta1},
                  {"adam_beta2", options.adam_beta2},
                  {"adam_epsilon", options.adam_epsilon},
                  {"workers", options.workers}}}};
    }

    void from_json(const ordered_json& j) {
        const auto& c = j.at("config");
        config.k = c.at("k").get<std::size_t>();
        config.alpha = c.at("alpha").get<double>();
        config.beta_tilde = c.at("beta_tilde").get<double>();
        config.delta = c.at("delta").get<double>();
        variant = c.at("variant").get<std::string>();
        config.init_low = c.at("init_low").get<double>();
        config.init_high = c.at("init_high").get<double>();
        const auto& o = j.at("options");
        options.learning_rate = o.at("learning_rate").get<double>();
        options.batch_size = o.at("batch_size").get<std::size_t>();
        options.epochs = o.at("epochs").get<std::size_t>();
        options.seed = o.at("seed").get<std::uint64_t>();
        options.adam_beta1 = o.at("adam_beta1").get<double>();
        options.adam_beta2 = o.at("adam_beta2").get<double>();
        options.adam_epsilon = o.at("adam_epsilon").get<double>();
        options.workers = o.at("workers").get<std::size_t>();
    }
};

ordered_json input_entry(const fs::path& path) {
    return {{"path", path.string()}, {"sha256", sha256_file(path)}};
}

ordered_json manifest_base(const std::string& command) {
    return {{"engine", kEngineVersion}, {"command", command}};
}

void write_manifest(const fs::path& path, const ordered_json& manifest) {
    auto out = open_output(path);
    out << manifest.dump(2) << '\n';
}

fs::path manifest_path_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

std::set<RelationId> resolve_relations(const std::vector<std::string>& names, const Vocabulary& vocab) {
    std::set<RelationId> out;
    for (const auto& name : names) {
        const auto id = vocab.find(name);
        if (!id) throw DataError("unknown relation '" + name + "'");
        out.insert(RelationId{*id});
    }
    return out;
}

Variant variant_for_checkpoint(const std::string& flag, const fs::path& checkpoint) {
    if (!flag.empty()) {
        const auto v = parse_variant(flag);
        if (!v) throw UsageError("unknown variant '" + flag + "' (expected f, fs or fsl)");
        return *v;
    }
    const auto manifest = checkpoint.parent_path() / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        const auto j = ordered_json::parse(in);
        if (const auto v = parse_variant(j.at("config").at("variant").get<std::string>())) return *v;
    }
    throw UsageError("--variant is required when the checkpoint has no manifest.json beside it");
}

// ---------------------------------------------------------------- train

struct TrainCommand {
    std::string facts;
    std::string rules;
    std::string out_dir;
    std::string manifest;
    std::vector<std::string> negative_init;
    TrainingFlags flags;
    CLI::App* app = nullptr;

    void setup(CLI::App& parent) {
        app = parent.add_subcommand("train", "Train relation and tuple embeddings");
        app->add_option("--facts", facts, "Training fact file (relation<TAB>tuple)")->check(CLI::ExistingFile);
        app->add_option("--rules", rules, "Rule file (antecedent => consequent); required iff --variant fsl")
            ->check(CLI::ExistingFile);
        app->add_option("--out", out_dir, "Output directory")->required();
        app->add_option("--from-manifest", manifest, "Re-run the training recorded in a manifest")
            ->check(CLI::ExistingFile);
        app->add_option("--negative-init", negative_init,
                        "Relations initialised uniformly in [-8.1,-7.9] (zero-shot protocol)");
        flags.add_to(*app);
        // --epochs comes from the manifest when re-running.
        app->get_option("--epochs")->required(false);
    }

    int run(std::ostream& out, std::ostream& err) {
        ordered_json recorded;
        if (!manifest.empty()) {
            std::ifstream in(manifest);
            recorded = ordered_json::parse(in);
            flags.from_json(recorded);
            facts = recorded.at("inputs").at("facts").at("path").get<std::string>();
            if (recorded.at("inputs").contains("rules")) {
                rules = recorded.at("inputs").at("rules").at("path").get<std::string>();
            }
            negative_init = recorded.value("negative_init", std::vector<std::string>{});
        } else if (app->get_option("--epochs")->count() == 0) {
            throw UsageError("--epochs is required");
        }
        if (facts.empty()) throw UsageError("--facts is required");
        flags.resolve();
        if (flags.config.variant == Variant::FSL && rules.empty()) {
            throw UsageError("--variant fsl requires --rules");
        }
        if (flags.config.variant != Variant::FSL && !rules.empty()) {
            throw UsageError("--rules is only used with --variant fsl");
        }

        ordered_json manifest_json = manifest_base("train");
        const ordered_json settings = flags.to_json();
        for (const auto& [key, value] : settings.items()) manifest_json[key] = value;
        manifest_json["inputs"]["facts"] = input_entry(facts);
        if (!rules.empty()) manifest_json["inputs"]["rules"] = input_entry(rules);
        manifest_json["negative_init"] = negative_init;
        if (!recorded.is_null() && recorded.at("inputs") != manifest_json.at("inputs")) {
            throw DataError("input files changed since the manifest was written");
        }

        const auto store = load_facts(facts);
        std::vector<Rule> rule_list;
        if (!rules.empty()) {
            auto loaded = load_rules(rules, store.relations());
            report_warnings(err, loaded.warnings);
            rule_list = std::move(loaded.rules);
            if (rule_list.empty()) err << "warning: no usable rules; fsl reduces to fs\n";
        }
        InitOverrides overrides;
        for (const auto r : resolve_relations(negative_init, store.relations())) overrides[r] = {-8.1, -7.9};

        const fs::path dir(out_dir);
        fs::create_directories(dir);
        auto metrics = open_output(dir / "metrics.csv");
        write_metrics_header(metrics);
        const auto result = train(store, rule_list, flags.config, flags.options, overrides,
                                  [&](const EpochStats& stats, const ModelParams&) {
                                      write_metrics_row(metrics, stats);
                                      metrics.flush();
                                  });
        save_checkpoint(dir / "checkpoint.txt", result.params, store.relations(), store.tuples());
        {
            auto adam = open_output(dir / "checkpoint.adam.txt");
            write_adam_state(adam, result.adam, store.relations(), store.tuples());
        }
        write_manifest(dir / "manifest.json", manifest_json);
        out << "trained " << to_string(flags.config.variant) << " on " << store.size() << " facts, "
            << store.num_relations() << " relations, " << store.num_tuples() << " tuples, " << rule_list.size()
            << " rules, " << flags.options.epochs << " epochs -> " << (dir / "checkpoint.txt").string() << '\n';
        return kExitOk;
    }
};

// ---------------------------------------------------------------- eval

struct EvalCommand {
    std::string checkpoint;
    std::string test;
    std::string train_facts;
    std::string variant;
    std::string output;
    std::size_t workers = 1;
    CLI::App* app = nullptr;

    void setup(CLI::App& parent) {
        app = parent.add_subcommand("eval", "Weighted MAP of a checkpoint on held-out facts");
        app->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
        app->add_option("--test", test, "Held-out fact file")->required()->check(CLI::ExistingFile);
        app->add_option("--train", train_facts, "Training facts, excluded from the candidate pools")
            ->check(CLI::ExistingFile);
        app->add_option("--variant", variant, "f, fs or fsl (default: from manifest.json beside the checkpoint)");
        app->add_option("--out", output, "CSV path (default: stdout)");
        app->add_option("--workers", workers, "Threads across relations; results do not depend on it")
            ->capture_default_str();
    }

    int run(std::ostream& out, std::ostream&) {
        const auto v = variant_for_checkpoint(variant, checkpoint);
        const auto cp = load_checkpoint(checkpoint);
        const auto test_store = load_facts_with_vocab(test, cp.relations, cp.tuples);
        const auto train_store = train_facts.empty() ? test_store.with_facts({})
                                                     : load_facts_with_vocab(train_facts, cp.relations, cp.tuples);
        const auto tasks = build_ranking_tasks(train_store, test_store);
        const auto report = weighted_map(tasks, cp.params, v, workers);

        auto manifest = manifest_base("eval");
        manifest["variant"] = std::string(to_string(v));
        manifest["inputs"]["checkpoint"] = input_entry(checkpoint);
        manifest["inputs"]["test"] = input_entry(test);
        if (!train_facts.empty()) manifest["inputs"]["train"] = input_entry(train_facts);
        if (output.empty()) {
            write_map_csv(out, report, cp.relations);
        } else {
            auto file = open_output(output);
            write_map_csv(file, report, cp.relations);
            write_manifest(manifest_path_for(output), manifest);
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- mine

struct MineCommand {
    std::string facts;
    std::string lexicon;
    std::string decisions;
    std::string output;
    CLI::App* app = nullptr;

    void setup(CLI::App& parent) {
        app = parent.add_subcommand("mine", "Mine implication rules by hypernym substitution in patterns");
        app->add_option("--facts", facts, "Fact file providing the pattern vocabulary")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--lexicon", lexicon, "word<TAB>hypernym file")->required()->check(CLI::ExistingFile);
        app->add_option("--decisions", decisions, "accept|reject<TAB>rule file; keeps accepted rules only")
            ->check(CLI::ExistingFile);
        app->add_option("--out", output, "Rule file to write")->required();
    }

    int run(std::ostream& out, std::ostream& err) {
        const auto store = load_facts(facts);
        if (store.num_relations() == 0) throw DataError("empty vocabulary");
        auto lex = load_lexicon(lexicon);
        report_warnings(err, lex.warnings);
        const auto mined = mine_rules(store.relations(), lex.lexicon);
        std::vector<Rule> rules;
        for (const auto& m : mined) rules.push_back(m.rule);
        std::size_t accepted = rules.size();
        if (!decisions.empty()) {
            std::ifstream in(decisions, std::ios::binary);
            auto filtered = filter_rules(mined, in, store.relations(), decisions);
            report_warnings(err, filtered.warnings);
            rules = std::move(filtered.accepted);
            accepted = rules.size();
        }
        {
            auto file = open_output(output);
            write_rules(file, rules, store.relations());
        }
        auto manifest = manifest_base("mine");
        manifest["inputs"]["facts"] = input_entry(facts);
        manifest["inputs"]["lexicon"] = input_entry(lexicon);
        if (!decisions.empty()) manifest["inputs"]["decisions"] = input_entry(decisions);
        manifest["counts"] = {{"patterns", store.num_relations()},
                              {"hypernym_pairs", lex.lexicon.size()},
                              {"mined", mined.size()},
                              {"written", accepted}};
        write_manifest(manifest_path_for(output), manifest);
        out << "patterns: " << store.num_relations() << "\nmined rules: " << mined.size()
            << "\nwritten rules: " << accepted << '\n';
        return kExitOk;
    }
};

// ---------------------------------------------------------------- analyze

struct AnalyzeCommand {
    std::string checkpoint;
    std::string rules;
    std::string train_facts;
    std::string test_facts;
    std::string variant;
    std::string output;
    std::vector<std::string> implied;
    std::vector<double> fractions{0.0, 0.25, 0.5, 1.0};
    std::uint64_t subsample_seed = 0;
    std::size_t workers = 1;
    TrainingFlags flags;
    CLI::App* asymmetry = nullptr;
    CLI::App* matrix = nullptr;
    CLI::App* zeroshot = nullptr;

    void setup(CLI::App& parent) {
        auto* app = parent.add_subcommand("analyze", "Asymmetry table, relation matrix or zero-shot curve");
        app->require_subcommand(1);

        asymmetry = app->add_subcommand("asymmetry", "Forward/backward mean sigmoid scores per rule");
        asymmetry->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
        asymmetry->add_option("--rules", rules)->required()->check(CLI::ExistingFile);
        asymmetry->add_option("--train", train_facts, "Training facts the tuples are drawn from")
            ->required()
            ->check(CLI::ExistingFile);
        asymmetry->add_option("--variant", variant);
        asymmetry->add_option("--out", output)->required();

        matrix = app->add_subcommand("matrix", "Embeddings of rule relations, sorted by L1 norm");
        matrix->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
        matrix->add_option("--rules", rules)->required()->check(CLI::ExistingFile);
        matrix->add_option("--out", output)->required();

        zeroshot = app->add_subcommand("zeroshot", "Weighted MAP of implied relations vs retained training fraction");
        zeroshot->add_option("--train", train_facts)->required()->check(CLI::ExistingFile);
        zeroshot->add_option("--test", test_facts)->required()->check(CLI::ExistingFile);
        zeroshot->add_option("--rules", rules, "Rules to inject (required for fsl)")->check(CLI::ExistingFile);
        zeroshot->add_option("--implied", implied, "Implied relations (default: rule consequents)");
        zeroshot->add_option("--fractions", fractions, "Retained fractions, strictly increasing")
            ->delimiter(',')
            ->capture_default_str();
        zeroshot->add_option("--subsample-seed", subsample_seed)->capture_default_str();
        zeroshot->add_option("--eval-workers", workers)->capture_default_str();
        zeroshot->add_option("--out", output)->required();
        flags.variant = "fsl";
        flags.add_to(*zeroshot);
    }

    int run(std::ostream& out, std::ostream& err) {
        auto manifest = manifest_base("analyze");
        auto file = open_output(output);
        if (asymmetry->parsed()) {
            const auto v = variant_for_checkpoint(variant, checkpoint);
            const auto cp = load_checkpoint(checkpoint);
            const auto train_store = load_facts_with_vocab(train_facts, cp.relations, cp.tuples);
            auto loaded = load_rules(rules, cp.relations);
            report_warnings(err, loaded.warnings);
            const auto report = asymmetry_report(cp.params, loaded.rules, train_store, v);
            write_asymmetry_csv(file, report, cp.relations);
            manifest["mode"] = "asymmetry";
            manifest["variant"] = std::string(to_string(v));
            manifest["inputs"]["checkpoint"] = input_entry(checkpoint);
            manifest["inputs"]["rules"] = input_entry(rules);
            manifest["inputs"]["train"] = input_entry(train_facts);
        } else if (matrix->parsed()) {
            const auto cp = load_checkpoint(checkpoint);
            auto loaded = load_rules(rules, cp.relations);
            report_warnings(err, loaded.warnings);
            write_relation_matrix_csv(file, relation_matrix(cp.params, loaded.rules), cp.relations);
            manifest["mode"] = "matrix";
            manifest["inputs"]["checkpoint"] = input_entry(checkpoint);
            manifest["inputs"]["rules"] = input_entry(rules);
        } else {
            flags.resolve();
            if (flags.config.variant == Variant::FSL && rules.empty()) {
                throw UsageError("zeroshot with --variant fsl requires --rules");
            }
            DatasetSplit split;
            split.train = load_facts(train_facts);
            split.test = load_facts_with_vocab(test_facts, split.train.relations(), split.train.tuples());
            std::vector<Rule> rule_list;
            if (!rules.empty()) {
                auto loaded = load_rules(rules, split.train.relations());
                report_warnings(err, loaded.warnings);
                rule_list = std::move(loaded.rules);
            }
            std::set<RelationId> implied_ids = resolve_relations(implied, split.train.relations());
            if (implied_ids.empty()) {
                for (const auto& r : rule_list) implied_ids.insert(r.consequent);
            }
            if (implied_ids.empty()) throw UsageError("no implied relations: pass --implied or --rules");
            ZeroShotOptions sweep;
            sweep.fractions = fractions;
            sweep.subsample_seed = subsample_seed;
            sweep.eval_workers = workers;
            const auto curve = zero_shot_sweep(split, rule_list, implied_ids, sweep, flags.config, flags.options);
            write_zero_shot_csv(file, curve);
            manifest["mode"] = "zeroshot";
            const ordered_json settings = flags.to_json();
            for (const auto& [key, value] : settings.items()) manifest[key] = value;
            manifest["fractions"] = fractions;
            manifest["subsample_seed"] = subsample_seed;
            std::vector<std::string> implied_names;
            for (const auto r : implied_ids) implied_names.push_back(split.train.relations().name(r.value));
            manifest["implied"] = implied_names;
            manifest["inputs"]["train"] = input_entry(train_facts);
            manifest["inputs"]["test"] = input_entry(test_facts);
            if (!rules.empty()) manifest["inputs"]["rules"] = input_entry(rules);
        }
        write_manifest(manifest_path_for(output), manifest);
        out << "wrote " << output << '\n';
        return kExitOk;
    }
};

// ---------------------------------------------------------------- split / synth

// A tuple seen only in the test file would be missing from the checkpoint
// vocabulary, which eval rejects, so one of its facts goes back to train.
DatasetSplit keep_tuples_in_train(const DatasetSplit& split) {
    std::vector<Fact> train(split.train.facts().begin(), split.train.facts().end());
    std::vector<Fact> test;
    std::vector<char> rescued(split.test.num_tuples(), 0);
    for (const auto& f : split.test.facts()) {
        if (split.train.relations_of(f.tuple).empty() && !rescued[f.tuple.value]) {
            rescued[f.tuple.value] = 1;
            train.push_back(f);
        } else {
            test.push_back(f);
        }
    }
    DatasetSplit out;
    out.train = split.train.with_facts(std::move(train));
    out.test = split.test.with_facts(std::move(test));
    for (const auto& [r, n] : split.test_relations) {
        if (const auto left = out.test.tuples_of(r).size(); left > 0) out.test_relations.emplace_back(r, left);
    }
    return out;
}

struct SplitCommand {
    std::string facts;
    double fraction = 0.2;
    std::uint64_t seed = 0;
    std::string train_out;
    std::string test_out;
    std::vector<std::string> only;
    CLI::App* app = nullptr;

    void setup(CLI::App& parent) {
        app = parent.add_subcommand("split", "Per-relation stratified train/test holdout");
        app->add_option("--facts", facts)->required()->check(CLI::ExistingFile);
        app->add_option("--test-fraction", fraction)->capture_default_str();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--train-out", train_out)->required();
        app->add_option("--test-out", test_out)->required();
        app->add_option("--only", only, "Hold out facts of these relations only; the rest stay in train");
    }

    int run(std::ostream& out, std::ostream&) {
        const auto store = load_facts(facts);
        const auto selected = resolve_relations(only, store.relations());
        const auto split = keep_tuples_in_train(holdout_split(store, fraction, seed, only.empty() ? nullptr : &selected));
        {
            auto train_file = open_output(train_out);
            write_facts(train_file, split.train);
            auto test_file = open_output(test_out);
            write_facts(test_file, split.test);
        }
        auto manifest = manifest_base("split");
        manifest["test_fraction"] = fraction;
        manifest["seed"] = seed;
        manifest["only"] = only;
        manifest["inputs"]["facts"] = input_entry(facts);
        write_manifest(manifest_path_for(train_out), manifest);
        out << "train " << split.train.size() << " facts, test " << split.test.size() << " facts over "
            << split.test_relations.size() << " relations\n";
        return kExitOk;
    }
};

struct SynthCommand {
    SyntheticSpec spec;
    std::uint64_t seed = 0;
    std::string out_dir;
    CLI::App* app = nullptr;

    void setup(CLI::App& parent) {
        app = parent.add_subcommand("synth", "Generate a synthetic corpus with planted implications");
        app->add_option("--out", out_dir, "Directory for facts.tsv and rules.tsv")->required();
        app->add_option("--seed", seed)->capture_default_str();
        app->add_option("--clusters", spec.clusters)->capture_default_str();
        app->add_option("--relations-per-cluster", spec.relations_per_cluster)->capture_default_str();
        app->add_option("--tuples", spec.tuples)->capture_default_str();
        app->add_option("--implications", spec.implications)->capture_default_str();
        app->add_option("--observe", spec.observe, "Probability that a true fact is observed")->capture_default_str();
    }

    int run(std::ostream& out, std::ostream&) {
        const auto corpus = generate_corpus(spec, seed);
        const fs::path dir(out_dir);
        {
            auto facts = open_output(dir / "facts.tsv");
            write_facts(facts, corpus.store);
            auto rules = open_output(dir / "rules.tsv");
            write_rules(rules, corpus.rules, corpus.store.relations());
        }
        auto manifest = manifest_base("synth");
        manifest["seed"] = seed;
        manifest["spec"] = {{"clusters", spec.clusters},
                            {"relations_per_cluster", spec.relations_per_cluster},
                            {"tuples", spec.tuples},
                            {"implications", spec.implications},
                            {"observe", spec.observe}};
        write_manifest(dir / "manifest.json", manifest);
        out << "wrote " << corpus.store.size() << " facts and " << corpus.rules.size() << " rules to " << dir.string()
            << '\n';
        return kExitOk;
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-base completion with lifted implication-rule injection"};
    app.footer(kCsvHelp);
    app.require_subcommand(1);
    app.set_version_flag("--version", kEngineVersion);

    TrainCommand train_cmd;
    EvalCommand eval_cmd;
    MineCommand mine_cmd;
    AnalyzeCommand analyze_cmd;
    SplitCommand split_cmd;
    SynthCommand synth_cmd;
    train_cmd.setup(app);
    eval_cmd.setup(app);
    mine_cmd.setup(app);
    analyze_cmd.setup(app);
    split_cmd.setup(app);
    synth_cmd.setup(app);

    std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << kEngineVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (train_cmd.app->parsed()) return train_cmd.run(out, err);
        if (eval_cmd.app->parsed()) return eval_cmd.run(out, err);
        if (mine_cmd.app->parsed()) return mine_cmd.run(out, err);
        if (split_cmd.app->parsed()) return split_cmd.run(out, err);
        if (synth_cmd.app->parsed()) return synth_cmd.run(out, err);
        return analyze_cmd.run(out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ParseError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: manifest: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace liftkb::cli
