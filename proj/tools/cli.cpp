#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "bastext/baselines.hpp"
#include "bastext/corpus.hpp"
#include "bastext/eval.hpp"
#include "bastext/model.hpp"
#include "bastext/parallel.hpp"
#include "bastext/query.hpp"

namespace bastext::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Common {
    std::string out = "bastext-out";
    int threads = default_thread_count();
    std::uint64_t seed = 42;
    bool quiet = false;
};

struct IngestArgs {
    std::string format = "canonical";
    std::vector<std::string> inputs;
};

struct SplitArgs {
    std::vector<double> ratios{0.85, 0.05, 0.10};
    bool cold = false;
    double coldFraction = 0.10;
};

struct TrainArgs {
    bool cold = false;
    std::string encoder = "mov";
    std::string pretrained;
    bool fineTune = false;
    int k = 64;
    int neg = 8;
    std::size_t batchSize = 10000;
    double lr = 1e-3;
    double dropout = 0.2;
    int epochs = 30;
    int patience = 3;
    std::uint64_t minCount = 1;
    bool bias = false;
    int filters = 64;
    std::vector<int> widths{2, 3};
    std::size_t validationCases = 2000;
};

struct EvalArgs {
    bool cold = false;
    std::string method = "bastext";
    std::string pool = "all";
    bool knnLastItem = false;
    std::string scores;
    std::string model;
    std::vector<Rank> topN{10, 20};
    // prod2vec only
    int k = 64;
    int neg = 8;
    double lr = 0.025;
    int epochs = 5;
};

struct ExportArgs {
    bool cold = false;
    std::string model;
    std::string which = "embedding";
    std::string output;
};

struct QueryArgs {
    bool cold = false;
    std::string model;
    std::size_t topN = 10;
    std::vector<std::string> terms;
};

// ---------------------------------------------------------------------------
// Artifact layout

fs::path corpus_dir(const Common& c) { return fs::path(c.out) / "corpus"; }
fs::path split_path(const Common& c, bool cold) { return fs::path(c.out) / "splits" / (cold ? "cold.txt" : "warm.txt"); }
fs::path model_path(const Common& c, bool cold, const std::string& override) {
    if (!override.empty()) return override;
    return fs::path(c.out) / "models" / (cold ? "bastext-cold.bin" : "bastext-warm.bin");
}
fs::path with_suffix(const fs::path& path, std::string_view suffix) {
    auto copy = path;
    copy.replace_extension(suffix);
    return copy;
}

void write_text(const fs::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(fmt::format("cannot create directory '{}': {}", path.parent_path().string(), ec.message()));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

void echo_config(const fs::path& path, const std::string& command, const Common& c, Json options) {
    Json j;
    j["command"] = command;
    j["out"] = c.out;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["options"] = std::move(options);
    write_text(path, j.dump(2) + "\n");
}

std::string hex(std::uint64_t value) { return fmt::format("{:016x}", value); }

Dataset load_corpus(const Common& c) {
    const auto dir = corpus_dir(c);
    const std::vector<fs::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    for (const auto& p : paths)
        if (!fs::exists(p)) throw Error(fmt::format("missing corpus file '{}'; run ingest first", p.string()));
    return import_dataset(DatasetFormat::canonical, paths);
}

DatasetSplit load_split(const Common& c, const Dataset& ds, bool cold) {
    const auto path = split_path(c, cold);
    if (!fs::exists(path)) throw Error(fmt::format("missing split manifest '{}'; run split{} first", path.string(), cold ? " --cold" : ""));
    return apply_manifest(read_split_manifest(path), ds.baskets, ds.catalog);
}

ModelState<float> load_checked_model(const fs::path& path, const Catalog& catalog, std::ostream& err) {
    if (!fs::exists(path)) throw Error(fmt::format("missing model '{}'; run train first", path.string()));
    auto state = load_model(path);
    if (state.catalogFingerprint != catalog.fingerprint())
        err << fmt::format("warning: model catalog fingerprint {} differs from corpus fingerprint {}\n",
                           hex(state.catalogFingerprint), hex(catalog.fingerprint()));
    return state;
}

ProductVectors<float> product_vectors(const ModelState<float>& state, const Catalog& catalog, int threads) {
    const auto tokens = encode_catalog(catalog, state.vocabulary);
    if (static_cast<std::size_t>(tokens.size()) != catalog.size()) throw Error("catalog encoding failed");
    return materialize_product_vectors(state.params, std::span<const std::vector<TokenId>>(tokens), threads);
}

ProductId resolve(const Catalog& catalog, const std::string& externalId) {
    const auto id = catalog.find(externalId);
    if (!id) throw Error(fmt::format("unknown product id '{}'", externalId));
    return *id;
}

void print_hits(std::ostream& out, const Catalog& catalog, std::span<const QueryHit> hits) {
    for (std::size_t r = 0; r < hits.size(); ++r) {
        const auto& p = catalog[hits[r].id];
        out << fmt::format("{}\t{}\t{:.6f}\t{}\n", r + 1, p.externalId, hits[r].score, p.title);
    }
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_ingest(const Common& c, const IngestArgs& a, std::ostream& out) {
    const auto format = parse_dataset_format(a.format);
    const std::vector<fs::path> inputs(a.inputs.begin(), a.inputs.end());
    for (const auto& p : inputs)
        if (!fs::exists(p)) throw Error(fmt::format("input '{}' does not exist", p.string()));
    const auto ds = import_dataset(format, inputs);
    const auto dir = corpus_dir(c);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
    write_canonical(ds, dir);

    Json stats;
    stats["products"] = ds.catalog.size();
    stats["baskets"] = ds.baskets.size();
    stats["malformed_rows"] = ds.stats.malformedRows;
    stats["collapsed_duplicates"] = ds.stats.collapsedDuplicates;
    stats["dropped_empty_title_products"] = ds.stats.droppedEmptyTitleProducts;
    stats["dropped_small_baskets"] = ds.stats.droppedSmallBaskets;
    stats["fingerprint"] = hex(ds.catalog.fingerprint());
    write_text(dir / "stats.json", stats.dump(2) + "\n");
    echo_config(dir / "ingest.config.json", "ingest", c, Json{{"format", a.format}, {"inputs", a.inputs}});
    out << fmt::format("ingested {} products and {} baskets ({} malformed rows, {} duplicates collapsed)\n",
                       ds.catalog.size(), ds.baskets.size(), ds.stats.malformedRows, ds.stats.collapsedDuplicates);
    return 0;
}

int cmd_split(const Common& c, const SplitArgs& a, std::ostream& out) {
    if (a.ratios.size() != 3) throw Error("--ratios needs three values: train,validation,test");
    const SplitRatios ratios{a.ratios[0], a.ratios[1], a.ratios[2]};
    const auto ds = load_corpus(c);
    const auto split = a.cold ? split_cold(ds.baskets, ratios, a.coldFraction, c.seed) : split_warm(ds.baskets, ratios, c.seed);
    const auto path = split_path(c, a.cold);
    write_split_manifest(make_manifest(split, ds.catalog), path);
    echo_config(with_suffix(path, ".config.json"), "split", c,
                Json{{"ratios", a.ratios}, {"cold", a.cold}, {"cold_fraction", a.coldFraction}});
    out << fmt::format("{} split: {} train / {} validation / {} test baskets", to_string(split.mode), split.train.size(),
                       split.validation.size(), split.test.size());
    if (a.cold) out << fmt::format(", {} test products", split.testProductIds.size());
    out << fmt::format(", {} occurrences removed\n", split.removedOccurrences);
    return 0;
}

ModelConfig model_config(const Common& c, const TrainArgs& a) {
    ModelConfig m;
    m.embeddingSize = a.k;
    m.negatives = a.neg;
    m.encoder = parse_encoder_kind(a.encoder);
    m.pretrained = !a.pretrained.empty();
    m.fineTuneInputs = a.fineTune;
    m.cnn.filters = a.filters;
    m.cnn.widths = a.widths;
    m.batchSize = a.batchSize;
    m.learningRate = a.lr;
    m.dropout = a.dropout;
    m.epochs = a.epochs;
    m.patience = a.patience;
    m.seed = c.seed;
    m.useBias = a.bias;
    m.validationCases = a.validationCases;
    m.validate();
    return m;
}

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const auto config = model_config(c, a);
    if (a.fineTune && a.pretrained.empty()) throw Error("--fine-tune needs --pretrained");
    const auto ds = load_corpus(c);
    const auto split = load_split(c, ds, a.cold);
    const auto vocab = build_vocabulary(ds.catalog, a.minCount);
    if (vocab.empty()) throw Error(fmt::format("vocabulary is empty at --min-count {}", a.minCount));
    const auto tokens = encode_catalog(ds.catalog, vocab);

    std::optional<PretrainedVectors> pretrained;
    if (!a.pretrained.empty()) {
        pretrained = load_pretrained_vectors(a.pretrained, vocab);
        if (!c.quiet)
            err << fmt::format("pretrained vectors cover {} of {} words ({:.1f}%)\n", pretrained->matched, vocab.size(),
                               100.0 * pretrained->coverage);
    }
    auto state = init_model<float>(config, vocab, ds.catalog.fingerprint(), pretrained ? &pretrained->vectors : nullptr);

    TrainingLog log;
    std::string logText;
    TrainOptions options;
    options.threads = c.threads;
    options.onEpoch = [&](const EpochRecord& r) {
        const auto line = TrainingLog::format_line(r);
        logText += line + "\n";
        if (!c.quiet) err << line << '\n';
    };
    state = train(std::move(state), split.train, split.validation, tokens, log, options);

    const auto path = model_path(c, a.cold, "");
    save_model(state, path);
    write_text(with_suffix(path, ".log"), logText);
    Json opts{{"cold", a.cold},
              {"encoder", a.encoder},
              {"pretrained", a.pretrained},
              {"fine_tune", a.fineTune},
              {"k", a.k},
              {"neg", a.neg},
              {"batch_size", a.batchSize},
              {"lr", a.lr},
              {"dropout", a.dropout},
              {"epochs", a.epochs},
              {"patience", a.patience},
              {"min_count", a.minCount},
              {"bias", a.bias},
              {"filters", a.filters},
              {"widths", a.widths},
              {"validation_cases", a.validationCases}};
    echo_config(with_suffix(path, ".config.json"), "train", c, std::move(opts));
    out << fmt::format("trained {} epochs (best {}), vocabulary {}, model written to {}\n", log.epochs.size(), log.bestEpoch,
                       vocab.size(), path.string());
    return 0;
}

int cmd_evaluate(const Common& c, const EvalArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    const auto ds = load_corpus(c);
    const auto split = load_split(c, ds, a.cold);
    const auto cases = form_test_cases(split);
    const auto M = ds.catalog.size();

    EvalOptions eo;
    eo.Ns = a.topN;
    eo.pool = parse_candidate_pool(a.pool);
    eo.threads = c.threads;
    eo.testProductIds = split.testProductIds;
    eo.mode = std::string(to_string(split.mode));
    eo.fingerprint = hex(ds.catalog.fingerprint());
    using Clock = std::chrono::steady_clock;
    const auto started = Clock::now();
    auto lastPrint = started;
    if (!c.quiet) {
        eo.progress = [&](std::size_t done, std::size_t total) {
            const auto now = Clock::now();
            if (done < total && now - lastPrint < std::chrono::seconds(2)) return;
            lastPrint = now;
            const double secs = std::chrono::duration<double>(now - started).count();
            err << fmt::format("evaluate: {}/{} cases, {:.0f} cases/s\n", done, total, secs > 0 ? static_cast<double>(done) / secs : 0.0);
        };
    }

    Json opts{{"cold", a.cold}, {"method", a.method}, {"pool", a.pool}, {"top_n", a.topN}};
    EvalReport report;
    if (a.method == "bastext") {
        const auto path = model_path(c, a.cold, a.model);
        const auto state = load_checked_model(path, ds.catalog, err);
        BastextScorer scorer(product_vectors(state, ds.catalog, c.threads), model_bias(state));
        report = evaluate(scorer, cases, eo);
        opts["model"] = path.string();
    } else if (a.method == "pop") {
        report = evaluate(PopScorer(build_pop(split.train, M)), cases, eo);
    } else if (a.method == "itemknn") {
        report = evaluate(ItemKnnScorer(build_itemknn(split.train, M), a.knnLastItem), cases, eo);
        opts["knn_last_item"] = a.knnLastItem;
    } else if (a.method == "prod2vec") {
        Prod2vecConfig p;
        if (sub.count("--k")) p.embeddingSize = a.k;
        if (sub.count("--neg")) p.negatives = a.neg;
        if (sub.count("--lr")) p.learningRate = a.lr;
        if (sub.count("--epochs")) p.epochs = a.epochs;
        p.seed = c.seed;
        report = evaluate(Prod2vecScorer(prod2vec_train(split.train, M, p)), cases, eo);
        opts["prod2vec"] = Json{{"k", p.embeddingSize}, {"neg", p.negatives}, {"lr", p.learningRate}, {"epochs", p.epochs},
                                {"sampling_power", p.samplingPower}};
    } else if (a.method == "external") {
        if (a.scores.empty()) throw Error("--method external needs --scores");
        report = evaluate_external(ExternalScores(a.scores, M, cases.size()), cases, eo);
        opts["scores"] = a.scores;
    } else {
        throw Error(fmt::format("unknown method '{}'", a.method));
    }

    const auto path = fs::path(c.out) / "reports" / fmt::format("{}-{}-{}.json", report.method, report.mode, report.pool);
    write_text(path, report.to_json());
    echo_config(with_suffix(path, ".config.json"), "evaluate", c, std::move(opts));
    out << report.to_table();
    return 0;
}

int cmd_export(const Common& c, const ExportArgs& a, std::ostream& out, std::ostream& err) {
    const auto ds = load_corpus(c);
    const auto path = model_path(c, a.cold, a.model);
    const auto state = load_checked_model(path, ds.catalog, err);
    const auto vectors = product_vectors(state, ds.catalog, c.threads);
    const auto& chosen = a.which == "context" ? vectors.context : vectors.embedding;
    const fs::path target = a.output.empty() ? with_suffix(path, fmt::format(".{}.txt", a.which)) : fs::path(a.output);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    export_vectors(chosen.cast<double>(), ds.catalog, target);
    out << fmt::format("wrote {} {} vectors to {}\n", ds.catalog.size(), a.which, target.string());
    return 0;
}

struct LoadedModel {
    Dataset ds;
    ModelState<float> state;
    ProductVectors<float> vectors;
};

LoadedModel load_for_query(const Common& c, const QueryArgs& a, std::ostream& err) {
    LoadedModel m;
    m.ds = load_corpus(c);
    m.state = load_checked_model(model_path(c, a.cold, a.model), m.ds.catalog, err);
    m.vectors = product_vectors(m.state, m.ds.catalog, c.threads);
    return m;
}

int cmd_query(const std::string& name, const Common& c, const QueryArgs& a, std::ostream& out, std::ostream& err) {
    auto m = load_for_query(c, a, err);
    const auto& catalog = m.ds.catalog;
    std::vector<QueryHit> hits;
    if (name == "similar" || name == "alsobuy") {
        if (a.terms.size() != 1) throw Error(fmt::format("{} takes exactly one product id", name));
        const auto id = resolve(catalog, a.terms.front());
        hits = name == "similar" ? query_similar(m.vectors, id, a.topN) : query_alsobuy(m.vectors, id, a.topN);
    } else if (name == "search") {
        std::string keywords;
        for (const auto& t : a.terms) keywords += (keywords.empty() ? "" : " ") + t;
        auto result = query_search(m.state, m.vectors, keywords, a.topN);
        if (result.allOutOfVocabulary) err << "warning: no query word is in the model vocabulary\n";
        hits = std::move(result.hits);
    } else {
        std::vector<ProductId> context;
        for (const auto& t : a.terms) context.push_back(resolve(catalog, t));
        const auto bias = model_bias(m.state);
        BastextScorer scorer(std::move(m.vectors), bias);
        hits = query_next(scorer, context, a.topN);
    }
    print_hits(out, catalog, hits);
    return 0;
}

void add_common(CLI::App& sub, Common& c) {
    sub.add_option("--out", c.out, "Output directory holding corpus/, splits/, models/ and reports/")->capture_default_str();
    sub.add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub.add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
    sub.add_flag("-q,--quiet", c.quiet, "Suppress progress output");
}

} // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Product vectors from titles and basket co-occurrence", "bastext"};
    app.require_subcommand(1);

    Common common;
    IngestArgs ingest;
    SplitArgs split;
    TrainArgs trainArgs;
    EvalArgs eval;
    ExportArgs exp;
    QueryArgs query;

    auto* ingestCmd = app.add_subcommand("ingest", "Import a dataset into the canonical corpus");
    add_common(*ingestCmd, common);
    ingestCmd->add_option("--format", ingest.format, "canonical, onlineretail or instacart")->capture_default_str();
    ingestCmd->add_option("inputs", ingest.inputs, "Input files")->required();

    auto* splitCmd = app.add_subcommand("split", "Split baskets into train, validation and test parts");
    add_common(*splitCmd, common);
    splitCmd->add_option("--ratios", split.ratios, "train,validation,test")->delimiter(',')->expected(3)->capture_default_str();
    splitCmd->add_flag("--cold", split.cold, "Hold out test products from training");
    splitCmd->add_option("--cold-fraction", split.coldFraction, "Share of test-part products held out")->capture_default_str();

    auto* trainCmd = app.add_subcommand("train", "Train a model on a split");
    add_common(*trainCmd, common);
    trainCmd->add_flag("--cold", trainArgs.cold, "Use the cold split");
    trainCmd->add_option("--encoder", trainArgs.encoder, "mov or cnn")->capture_default_str();
    trainCmd->add_option("--pretrained", trainArgs.pretrained, "Word vector file");
    trainCmd->add_flag("--fine-tune", trainArgs.fineTune, "Update pretrained word vectors");
    trainCmd->add_option("--k", trainArgs.k, "Embedding size")->capture_default_str();
    trainCmd->add_option("--neg", trainArgs.neg, "Negatives per positive")->capture_default_str();
    trainCmd->add_option("--batch-size", trainArgs.batchSize, "Positives per step")->capture_default_str();
    trainCmd->add_option("--lr", trainArgs.lr, "Adam learning rate")->capture_default_str();
    trainCmd->add_option("--dropout", trainArgs.dropout, "Dropout rate")->capture_default_str();
    trainCmd->add_option("--epochs", trainArgs.epochs, "Maximum epochs")->capture_default_str();
    trainCmd->add_option("--patience", trainArgs.patience, "Epochs without improvement before stopping")->capture_default_str();
    trainCmd->add_option("--min-count", trainArgs.minCount, "Minimum word count")->capture_default_str();
    trainCmd->add_flag("--bias", trainArgs.bias, "Learn a global bias");
    trainCmd->add_option("--filters", trainArgs.filters, "CNN filters per width")->capture_default_str();
    trainCmd->add_option("--widths", trainArgs.widths, "CNN widths")->delimiter(',')->capture_default_str();
    trainCmd->add_option("--validation-cases", trainArgs.validationCases, "Validation case cap")->capture_default_str();

    auto* evalCmd = app.add_subcommand("evaluate", "Leave-one-out evaluation on the test part");
    add_common(*evalCmd, common);
    evalCmd->add_flag("--cold", eval.cold, "Use the cold split");
    evalCmd->add_option("--method", eval.method, "bastext, pop, itemknn, prod2vec or external")->capture_default_str();
    evalCmd->add_option("--pool", eval.pool, "all or test-products")->capture_default_str();
    evalCmd->add_flag("--knn-last-item", eval.knnLastItem, "ItemKNN scores against the last context item");
    evalCmd->add_option("--scores", eval.scores, "External score file");
    evalCmd->add_option("--model", eval.model, "Model file");
    evalCmd->add_option("--top-n", eval.topN, "Cutoffs")->delimiter(',')->capture_default_str();
    evalCmd->add_option("--k", eval.k, "prod2vec embedding size");
    evalCmd->add_option("--neg", eval.neg, "prod2vec negatives");
    evalCmd->add_option("--lr", eval.lr, "prod2vec learning rate");
    evalCmd->add_option("--epochs", eval.epochs, "prod2vec epochs");

    auto* exportCmd = app.add_subcommand("export", "Write product vectors as text");
    add_common(*exportCmd, common);
    exportCmd->add_flag("--cold", exp.cold, "Use the cold model");
    exportCmd->add_option("--model", exp.model, "Model file");
    exportCmd->add_option("--which", exp.which, "embedding or context")
        ->check(CLI::IsMember({"embedding", "context"}))
        ->capture_default_str();
    exportCmd->add_option("--output", exp.output, "Target file");

    std::vector<CLI::App*> queries;
    for (const auto& [name, help, what] :
         {std::tuple{"similar", "Products with similar embedding vectors", "Product id"},
          std::tuple{"alsobuy", "Products likely bought with a product", "Product id"},
          std::tuple{"search", "Products matching keywords", "Keywords"},
          std::tuple{"next", "Next product for a basket", "Product ids in the basket"}}) {
        auto* q = app.add_subcommand(name, help);
        add_common(*q, common);
        q->add_flag("--cold", query.cold, "Use the cold model");
        q->add_option("--model", query.model, "Model file");
        q->add_option("--top-n", query.topN, "Results to print")->capture_default_str()->check(CLI::PositiveNumber);
        q->add_option("terms", query.terms, what)->required();
        queries.push_back(q);
    }

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (ingestCmd->parsed()) return cmd_ingest(common, ingest, out);
        if (splitCmd->parsed()) return cmd_split(common, split, out);
        if (trainCmd->parsed()) return cmd_train(common, trainArgs, out, err);
        if (evalCmd->parsed()) return cmd_evaluate(common, eval, *evalCmd, out, err);
        if (exportCmd->parsed()) return cmd_export(common, exp, out, err);
        for (auto* q : queries)
            if (q->parsed()) return cmd_query(q->get_name(), common, query, out, err);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << '\n';
        return 1;
    }
    return 2;
}

} // namespace bastext::cli
