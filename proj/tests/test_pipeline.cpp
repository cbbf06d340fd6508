#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "textclass/checkpoint.hpp"
#include "textclass/corpus.hpp"
#include "textclass/encoder.hpp"
#include "textclass/errors.hpp"
#include "textclass/metrics.hpp"
#include "textclass/pipeline.hpp"
#include "textclass/tokenize.hpp"
#include "textclass/train.hpp"

using namespace textclass;
using namespace textclass::pipeline;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("textclass_pipeline_" + std::to_string(counter++) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this) & 0xffff));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) { return checkpoint::read_text_file(path); }

// Three keyword classes with rotating filler, generic CSV layout.
std::string keyword_csv(int per_class) {
    const char* kw[3] = {"alpha", "beta", "gamma"};
    const char* label[3] = {"pos", "neg", "neu"};
    const char* filler[4] = {"steady", "noise", "calm", "drift"};
    std::string s = "id,label,language,text\n";
    int id = 1;
    for (int rep = 0; rep < per_class; ++rep)
        for (int c = 0; c < 3; ++c) {
            s += std::to_string(id++) + "," + label[c] + ",en," + kw[c] + " " + kw[c] + " " +
                 filler[rep % 4] + " " + filler[(rep + c) % 4] + "\n";
        }
    return s;
}

PipelineConfig base_config(const TempDir& dir, const std::string& dataset) {
    PipelineConfig cfg;
    cfg.seed = 11;
    cfg.out_dir = dir.file("out");
    cfg.dataset.path = dataset;
    cfg.tokenizer.vocab_size = 60;
    cfg.tokenizer.T = 16;
    cfg.tokenizer.stride = 8;
    cfg.model.E = 8;
    cfg.model.H = 2;
    cfg.model.d_K = 4;
    cfg.model.L = 1;
    cfg.model.T_max = 16;
    cfg.model.F = 16;
    cfg.model.pooling = "mean";
    cfg.train.config.epochs = 6;
    cfg.train.config.batch_size = 8;
    cfg.train.config.lr = 1e-2;
    return cfg;
}

// train-tokenizer followed by finetune-task, leaving vocab.txt and
// classifier.json under the default out-dir names.
PipelineConfig trained_setup(const TempDir& dir) {
    checkpoint::write_text_file(dir.file("train.csv"), keyword_csv(8));
    PipelineConfig cfg = base_config(dir, dir.file("train.csv"));
    run(cfg, "train-tokenizer");
    run(cfg, "finetune-task");
    return cfg;
}

const std::vector<std::vector<int64_t>> kConfusionA = {
    {295, 4, 1, 0, 0, 7, 0, 2, 1},   {11, 30, 2, 0, 0, 0, 0, 2, 1},
    {41, 0, 75, 1, 0, 2, 0, 0, 4},   {28, 0, 2, 68, 2, 7, 0, 0, 0},
    {0, 0, 0, 0, 18, 0, 0, 0, 0},    {29, 0, 1, 1, 0, 189, 0, 5, 2},
    {12, 2, 1, 0, 0, 0, 0, 52, 0},   {7, 1, 1, 1, 0, 1, 0, 27, 0},
    {50, 1, 4, 2, 0, 13, 0, 10, 23}};
const std::vector<std::vector<int64_t>> kConfusionB = {
    {288, 5, 2, 0, 0, 10, 0, 3, 2},  {2, 38, 4, 1, 0, 1, 0, 0, 0},
    {0, 1, 114, 1, 0, 3, 0, 0, 4},   {4, 0, 3, 95, 2, 3, 0, 0, 0},
    {0, 0, 0, 0, 18, 0, 0, 0, 0},    {15, 0, 1, 0, 0, 197, 0, 9, 5},
    {4, 1, 0, 0, 0, 0, 0, 60, 2},    {0, 0, 0, 3, 0, 2, 0, 33, 0},
    {30, 2, 3, 3, 0, 10, 0, 20, 35}};

std::string confusion_csv(const std::vector<std::vector<int64_t>>& m) {
    std::string s;
    for (size_t j = 0; j < m[0].size(); ++j) s += (j ? ",c" : "c") + std::to_string(j);
    s += "\n";
    for (const auto& row : m) {
        for (size_t j = 0; j < row.size(); ++j)
            s += (j ? "," : "") + std::to_string(row[j]);
        s += "\n";
    }
    return s;
}

}  // namespace

TEST_CASE("config defaults and json round trip") {
    PipelineConfig cfg = parse_config("{}");
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.dataset.schema == "generic");
    CHECK(cfg.dataset.label_rule == "column");
    CHECK(cfg.tokenizer.mode == "wordpiece");
    CHECK(cfg.tokenizer.T == 64);
    CHECK(cfg.model.E == 32);
    CHECK(cfg.model.positional);
    CHECK(cfg.train.approach == "C");
    CHECK(cfg.train.l2_lambda == 0.0);
    CHECK(cfg.task.steps == 64);
    CHECK(cfg.task.topics.min_pts == 5);

    std::string dump = config_to_json(cfg);
    CHECK(config_to_json(parse_config(dump)) == dump);

    PipelineConfig other = parse_config("{\"seed\": 7, \"model\": {\"E\": 16}}");
    CHECK(other.seed == 7);
    CHECK(other.model.E == 16);
    CHECK(other.model.H == 4);
    CHECK(config_hash(cfg).size() == 16);
    CHECK(config_hash(cfg) != config_hash(other));
    CHECK(config_hash(cfg) == config_hash(parse_config(dump)));
}

TEST_CASE("config parsing is strict") {
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"seeds\": 1}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"model\": {\"width\": 8}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"seed\": \"42\"}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"seed\": -1}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"tokenizer\": {\"T\": -3}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"tokenizer\": {\"T\": 8.5}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"model\": {\"positional\": 1}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"train\": {\"lr\": \"fast\"}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"train\": 3}"), ConfigError);
}

TEST_CASE("config file loading") {
    TempDir dir;
    CHECK_THROWS_AS(load_config(dir.file("missing.json")), ConfigError);
    checkpoint::write_text_file(dir.file("run.json"), "{\"seed\": 9, \"out_dir\": \"o\"}\n");
    PipelineConfig cfg = load_config(dir.file("run.json"));
    CHECK(cfg.seed == 9);
    CHECK(cfg.out_dir == "o");
}

TEST_CASE("validation rejects bad fields") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("d.csv"), keyword_csv(1));
    PipelineConfig cfg = base_config(dir, dir.file("d.csv"));

    CHECK_THROWS_AS(validate(cfg, "fit"), ConfigError);
    validate(cfg, "train-tokenizer");  // the baseline passes

    auto broken = [&](auto mutate) {
        PipelineConfig c = cfg;
        mutate(c);
        CHECK_THROWS_AS(validate(c, "train-tokenizer"), ConfigError);
    };
    broken([](PipelineConfig& c) { c.dataset.schema = "tabular"; });
    broken([](PipelineConfig& c) { c.dataset.label_rule = "guess"; });
    broken([](PipelineConfig& c) { c.tokenizer.mode = "words"; });
    broken([](PipelineConfig& c) { c.tokenizer.T = 2; });
    broken([](PipelineConfig& c) { c.tokenizer.stride = 0; });
    broken([](PipelineConfig& c) { c.tokenizer.vocab_size = 5; });
    broken([](PipelineConfig& c) { c.train.approach = "A"; });
    broken([](PipelineConfig& c) {
        c.train.approach = "B";
        c.model.pooling.clear();
    });
    broken([](PipelineConfig& c) { c.model.pooling = "max"; });
    broken([](PipelineConfig& c) { c.model.E = 7; });
    broken([](PipelineConfig& c) { c.model.T_max = 8; });  // below tokenizer.T
    broken([](PipelineConfig& c) { c.train.config.epochs = 0; });
    broken([](PipelineConfig& c) { c.train.l2_lambda = -0.5; });
    broken([](PipelineConfig& c) { c.task.combine = "sum"; });
    broken([](PipelineConfig& c) { c.task.steps = 0; });
    broken([](PipelineConfig& c) { c.task.fallback_threshold_pp = -1.0; });
    broken([](PipelineConfig& c) { c.task.topics.mmr_lambda = 1.5; });
    broken([](PipelineConfig& c) { c.task.name = "everything"; });
    broken([](PipelineConfig& c) { c.out_dir.clear(); });

    PipelineConfig named = cfg;
    named.task.name = "classify";
    CHECK_THROWS_AS(validate(named, "finetune-mlm"), ConfigError);
    named.task.name = "mlm";
    fs::create_directories(cfg.out_dir);
    tokenize::save_vocabulary(dir.file("out/vocab.txt"), tokenize::Vocabulary::with_specials());
    validate(named, "finetune-mlm");

    PipelineConfig wrong = cfg;
    wrong.train.approach = "C";
    CHECK_THROWS_AS(validate(wrong, "train-classifier"), ConfigError);
    wrong.train.approach = "B";
    CHECK_THROWS_AS(validate(wrong, "finetune-task"), ConfigError);
}

TEST_CASE("invalid runs leave no artifacts behind") {
    TempDir dir;
    PipelineConfig cfg = base_config(dir, dir.file("missing.csv"));

    CHECK_THROWS_AS(run(cfg, "train-tokenizer"), ConfigError);
    CHECK(!fs::exists(cfg.out_dir));

    checkpoint::write_text_file(dir.file("data.csv"), keyword_csv(1));
    cfg.dataset.path = dir.file("data.csv");
    CHECK_THROWS_AS(run(cfg, "encode"), ConfigError);        // no vocabulary yet
    CHECK_THROWS_AS(run(cfg, "predict"), ConfigError);       // no classifier either
    CHECK_THROWS_AS(run(cfg, "similarity"), ConfigError);  // no expressions
    CHECK(!fs::exists(cfg.out_dir));

    // A dataset that parses as CSV but not as a corpus is a data error,
    // caught before anything is written.
    checkpoint::write_text_file(dir.file("broken.csv"), "a,b\n1,2\n");
    cfg.dataset.path = dir.file("broken.csv");
    CHECK_THROWS_AS(run(cfg, "train-tokenizer"), SchemaError);
    CHECK(!fs::exists(cfg.out_dir));
}

TEST_CASE("exit codes follow the error taxonomy") {
    CHECK(exit_code_for(ConfigError("x")) == 1);
    CHECK(exit_code_for(NumericError("x")) == 3);
    CHECK(exit_code_for(ParseError("x")) == 2);
    CHECK(exit_code_for(SchemaError("x")) == 2);
    CHECK(exit_code_for(LabelError("x")) == 2);
    CHECK(exit_code_for(IoError("x")) == 2);
    CHECK(exit_code_for(DomainError("x")) == 2);
    CHECK(exit_code_for(std::runtime_error("x")) == 2);
}

TEST_CASE("train-tokenizer writes a loadable vocabulary and manifest") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("data.csv"), keyword_csv(8));
    PipelineConfig cfg = base_config(dir, dir.file("data.csv"));

    RunResult res = run(cfg, "train-tokenizer");
    REQUIRE(res.artifacts.size() == 2);
    CHECK(res.artifacts[0] == dir.file("out/vocab.txt"));
    CHECK(res.artifacts[1] == dir.file("out/manifest.json"));
    CHECK(res.summary.find("vocabulary of 60 tokens") != std::string::npos);

    tokenize::Vocabulary vocab = tokenize::load_vocabulary(dir.file("out/vocab.txt"));
    CHECK(vocab.size() == 60);
    CHECK(vocab.id("[PAD]") == tokenize::Vocabulary::kPad);

    nlohmann::json manifest = nlohmann::json::parse(slurp(dir.file("out/manifest.json")));
    CHECK(manifest["command"] == "train-tokenizer");
    CHECK(manifest["seed"] == 11);
    CHECK(manifest["version"] == kVersion);
    CHECK(manifest["config_hash"] == config_hash(cfg));
    // the manifest lists the run's outputs, itself excluded
    REQUIRE(manifest["artifacts"].size() == 1);
    CHECK(manifest["artifacts"][0] == dir.file("out/vocab.txt"));
    CHECK(manifest["config"]["tokenizer"]["vocab_size"] == 60);

    std::string vocab_bytes = slurp(dir.file("out/vocab.txt"));
    std::string manifest_bytes = slurp(dir.file("out/manifest.json"));
    fs::remove_all(cfg.out_dir);
    run(cfg, "train-tokenizer");
    CHECK(slurp(dir.file("out/vocab.txt")) == vocab_bytes);
    CHECK(slurp(dir.file("out/manifest.json")) == manifest_bytes);
}

TEST_CASE("encode dumps pooled features that match the library") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("data.csv"), keyword_csv(2));
    PipelineConfig cfg = base_config(dir, dir.file("data.csv"));
    run(cfg, "train-tokenizer");
    run(cfg, "encode");

    corpus::CsvTable t = corpus::read_csv(dir.file("out/features.csv"));
    REQUIRE(t.header.size() == 9);
    CHECK(t.header[0] == "id");
    CHECK(t.header[1] == "f0");
    CHECK(t.header[8] == "f7");
    REQUIRE(t.rows.size() == 6);

    tokenize::Vocabulary vocab = tokenize::load_vocabulary(dir.file("out/vocab.txt"));
    encoder::EncoderConfig ec;
    ec.V = vocab.size();
    ec.E = 8;
    ec.H = 2;
    ec.d_K = 4;
    ec.L = 1;
    ec.T_max = 16;
    ec.F = 16;
    encoder::EncoderModel enc = encoder::init_encoder(ec, cfg.seed);
    corpus::DocumentSet set = corpus::from_csv(corpus::read_csv(dir.file("data.csv")));
    std::vector<tokenize::TokenSequence> seqs;
    for (const auto& r : set.records)
        seqs.push_back(tokenize::wordpiece_encode(r.text, vocab, 16));
    Tensor X = encoder::embed_pooled(seqs, enc, encoder::Pooling::kMean);
    for (size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(t.rows[i][0] == std::to_string(set.records[i].id));
        for (size_t e = 0; e < 8; ++e)
            CHECK(std::abs(std::stod(t.rows[i][e + 1]) - X.at(i, e)) <= 1e-8);
    }

    std::string bytes = slurp(dir.file("out/features.csv"));
    run(cfg, "encode");
    CHECK(slurp(dir.file("out/features.csv")) == bytes);
}

TEST_CASE("train-classifier fits a logistic head over frozen features") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("data.csv"), keyword_csv(8));
    PipelineConfig cfg = base_config(dir, dir.file("data.csv"));
    cfg.train.approach = "B";
    cfg.train.config.epochs = 300;
    cfg.train.config.lr = 0.1;
    cfg.train.l2_lambda = 1e-3;
    run(cfg, "train-tokenizer");
    RunResult res = run(cfg, "train-classifier");
    CHECK(res.summary.find("training accuracy") != std::string::npos);

    train::LogRegModel lr = checkpoint::load_logreg(dir.file("out/logreg.json"));
    CHECK(lr.classes == std::vector<std::string>{"pos", "neg", "neu"});
    CHECK(lr.weights.rows() == 8);
    CHECK(lr.l2_lambda == 1e-3);

    // The random frozen encoder still separates the keyword classes well
    // beyond the 1/3 dummy baseline.
    double acc = std::stod(res.summary.substr(res.summary.rfind(' ') + 1));
    CHECK(acc >= 0.8);
}

TEST_CASE("finetune-mlm writes a tuned encoder checkpoint") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("data.csv"), keyword_csv(4));
    PipelineConfig cfg = base_config(dir, dir.file("data.csv"));
    cfg.train.config.epochs = 1;
    run(cfg, "train-tokenizer");
    run(cfg, "finetune-mlm");

    encoder::EncoderModel tuned = checkpoint::load_encoder(dir.file("out/encoder.json"));
    tokenize::Vocabulary vocab = tokenize::load_vocabulary(dir.file("out/vocab.txt"));
    CHECK(tuned.config.V == vocab.size());

    encoder::EncoderConfig ec = tuned.config;
    encoder::EncoderModel init = encoder::init_encoder(ec, cfg.seed);
    double drift = 0.0;
    for (size_t i = 0; i < init.W_emb.size(); ++i)
        drift = std::max(drift, std::abs(init.W_emb[i] - tuned.W_emb[i]));
    CHECK(drift > 1e-6);

    std::string bytes = slurp(dir.file("out/encoder.json"));
    run(cfg, "finetune-mlm");
    CHECK(slurp(dir.file("out/encoder.json")) == bytes);
}

TEST_CASE("finetune-task, predict and evaluate chain end to end") {
    TempDir dir;
    PipelineConfig cfg = trained_setup(dir);

    train::SequenceClassifier clf = checkpoint::load_classifier(dir.file("out/classifier.json"));
    CHECK(clf.classes == std::vector<std::string>{"pos", "neg", "neu"});
    CHECK(clf.pooling == encoder::Pooling::kMean);

    run(cfg, "predict");
    corpus::CsvTable preds = corpus::read_csv(dir.file("out/predictions.csv"));
    REQUIRE(preds.header.size() == 5);
    CHECK(preds.header[1] == "label");
    CHECK(preds.header[2] == "p_pos");
    REQUIRE(preds.rows.size() == 24);
    corpus::DocumentSet set = corpus::from_csv(corpus::read_csv(cfg.dataset.path));
    int correct = 0;
    for (size_t i = 0; i < preds.rows.size(); ++i) {
        correct += preds.rows[i][1] == *set.records[i].label;
        double sum = 0.0;
        for (size_t k = 2; k < 5; ++k) sum += std::stod(preds.rows[i][k]);
        CHECK(std::abs(sum - 1.0) <= 1e-8);  // probabilities printed at %.9g
    }
    CHECK(correct >= 22);

    RunResult ev = run(cfg, "evaluate");
    CHECK(ev.summary.find("accuracy") != std::string::npos);
    std::string report = slurp(dir.file("out/report.txt"));
    CHECK(report.rfind("log_loss,brier,accuracy\n", 0) == 0);
    CHECK(report.find("confusion,rows=actual,cols=predicted\n") != std::string::npos);
    size_t start = report.find('\n') + 1;
    std::string line = report.substr(start, report.find('\n', start) - start);
    double acc = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(std::abs(acc - correct / 24.0) <= 5e-7);

    // A rerun with the same seed reproduces the checkpoint bit for bit.
    std::string clf_bytes = slurp(dir.file("out/classifier.json"));
    PipelineConfig again = cfg;
    again.out_dir = dir.file("out2");
    again.tokenizer.vocab_path = dir.file("out/vocab.txt");
    run(again, "finetune-task");
    CHECK(slurp(dir.file("out2/classifier.json")) == clf_bytes);

    PipelineConfig reseeded = again;
    reseeded.seed = 12;
    reseeded.out_dir = dir.file("out3");
    run(reseeded, "finetune-task");
    CHECK(slurp(dir.file("out3/classifier.json")) != clf_bytes);
}

TEST_CASE("chunked predict equals plain predict on short documents") {
    TempDir dir;
    PipelineConfig cfg = trained_setup(dir);
    checkpoint::write_text_file(dir.file("short.csv"),
                                "id,label,language,text\n1,,,alpha\n2,,,beta\n3,,,gamma\n");
    cfg.dataset.path = dir.file("short.csv");

    PipelineConfig plain = cfg;
    plain.out_dir = dir.file("plain");
    plain.tokenizer.vocab_path = dir.file("out/vocab.txt");
    plain.model.checkpoint = dir.file("out/classifier.json");
    run(plain, "predict");

    PipelineConfig chunked = plain;
    chunked.out_dir = dir.file("chunked");
    chunked.task.chunk = true;
    run(chunked, "predict");

    CHECK(slurp(dir.file("plain/predictions.csv")) ==
          slurp(dir.file("chunked/predictions.csv")));
}

TEST_CASE("attribute writes an html report and a csv table") {
    TempDir dir;
    PipelineConfig cfg = trained_setup(dir);
    checkpoint::write_text_file(
        dir.file("few.csv"),
        "id,label,language,text\n1,pos,en,alpha alpha steady\n2,neg,en,beta beta noise\n");
    cfg.dataset.path = dir.file("few.csv");
    cfg.task.steps = 8;

    RunResult res = run(cfg, "attribute");
    REQUIRE(res.artifacts.size() == 3);
    std::string html = slurp(dir.file("out/attributions.html"));
    CHECK(html.find("<table") != std::string::npos);
    CHECK(html.find("rgba(") != std::string::npos);
    CHECK(html.find(">1<") != std::string::npos);

    corpus::CsvTable t = corpus::read_csv(dir.file("out/attributions.csv"));
    REQUIRE(t.header == std::vector<std::string>{"doc_id", "position", "token", "score"});
    CHECK(t.rows.size() >= 10);  // both docs, specials included, no padding
    for (const auto& row : t.rows) CHECK(row[2] != "[PAD]");
    CHECK(t.rows[0][2] == "[CLS]");

    std::string bytes = slurp(dir.file("out/attributions.csv"));
    run(cfg, "attribute");
    CHECK(slurp(dir.file("out/attributions.csv")) == bytes);

    cfg.task.target = "neu";
    run(cfg, "attribute");
    CHECK(slurp(dir.file("out/attributions.csv")) != bytes);
    cfg.task.target = "unknown";
    CHECK_THROWS_AS(run(cfg, "attribute"), ConfigError);
}

TEST_CASE("similarity labels documents against expressions") {
    TempDir dir;
    PipelineConfig cfg = trained_setup(dir);
    checkpoint::write_text_file(dir.file("expr.tsv"),
                                "alpha alpha\tpos\nbeta beta\tneg\ngamma gamma\tneu\n");
    cfg.task.expressions = dir.file("expr.tsv");
    cfg.model.checkpoint = dir.file("out/classifier.json");  // fine-tuned encoder

    RunResult res = run(cfg, "similarity");
    CHECK(res.summary.find("3 expressions") != std::string::npos);
    corpus::CsvTable t = corpus::read_csv(dir.file("out/labels.csv"));
    REQUIRE(t.header == std::vector<std::string>{"id", "label", "best", "score"});
    REQUIRE(t.rows.size() == 24);
    corpus::DocumentSet set = corpus::from_csv(corpus::read_csv(cfg.dataset.path));
    int correct = 0;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        correct += t.rows[i][1] == *set.records[i].label;
        CHECK(std::stod(t.rows[i][3]) <= 1.0 + 1e-9);
    }
    CHECK(correct >= 20);

    // A fallback label must resolve to exactly one expression.
    cfg.task.fallback_label = "nomatch";
    CHECK_THROWS_AS(run(cfg, "similarity"), ConfigError);

    // With an absurd margin the fallback expression can never win.
    checkpoint::write_text_file(dir.file("expr2.tsv"),
                                "alpha alpha\tpos\nbeta beta\tneg\ngamma gamma\tneu\n"
                                "steady\tother\n");
    cfg.task.expressions = dir.file("expr2.tsv");
    cfg.task.fallback_label = "other";
    cfg.task.fallback_threshold_pp = 200.0;
    run(cfg, "similarity");
    corpus::CsvTable t2 = corpus::read_csv(dir.file("out/labels.csv"));
    for (const auto& row : t2.rows) CHECK(row[1] != "other");
}

TEST_CASE("topics clusters duplicate groups and refines labels") {
    TempDir dir;
    std::string csv = "id,label,language,text\n";
    const char* text[3] = {"alpha alpha common", "beta beta common", "gamma gamma common"};
    const char* label[3] = {"pos", "neg", "neu"};
    int id = 1;
    for (int c = 0; c < 3; ++c)
        for (int rep = 0; rep < 6; ++rep)
            csv += std::to_string(id++) + "," + label[c] + ",en," + text[c] + "\n";
    checkpoint::write_text_file(dir.file("data.csv"), csv);

    PipelineConfig cfg = base_config(dir, dir.file("data.csv"));
    cfg.tokenizer.vocab_size = 40;
    cfg.task.topics.pca_k = 3;
    cfg.task.topics.min_pts = 4;
    cfg.task.topics.top_k = 2;
    cfg.task.refine = true;
    cfg.train.config.epochs = 200;
    cfg.train.config.lr = 0.1;
    run(cfg, "train-tokenizer");
    RunResult res = run(cfg, "topics");
    CHECK(res.summary.find("3 clusters, 0 outliers") != std::string::npos);

    corpus::CsvTable clusters = corpus::read_csv(dir.file("out/clusters.csv"));
    REQUIRE(clusters.rows.size() == 18);
    for (size_t i = 0; i < 18; ++i)
        CHECK(clusters.rows[i][1] == std::to_string(static_cast<int>(i / 6)));

    // Identical documents per class make each cluster pure, so the top
    // c-TF-IDF word is the class keyword, then the shared filler.
    corpus::CsvTable topics = corpus::read_csv(dir.file("out/topics.csv"));
    REQUIRE(topics.header == std::vector<std::string>{"cluster", "rank", "word", "score"});
    REQUIRE(topics.rows.size() == 6);
    CHECK(topics.rows[0][2] == "alpha");
    CHECK(topics.rows[1][2] == "common");
    CHECK(topics.rows[2][2] == "beta");
    CHECK(topics.rows[4][2] == "gamma");

    CHECK(slurp(dir.file("out/cluster_labels.tsv")) == "0\tpos\n1\tneg\n2\tneu\n");

    corpus::CsvTable refined = corpus::read_csv(dir.file("out/refined.csv"));
    REQUIRE(refined.rows.size() == 18);
    for (size_t i = 0; i < 18; ++i) CHECK(refined.rows[i][1] == label[i / 6]);

    std::string bytes = slurp(dir.file("out/topics.csv"));
    run(cfg, "topics");
    CHECK(slurp(dir.file("out/topics.csv")) == bytes);

    // Without labels the clusters keep their own names end to end.
    PipelineConfig unlabeled = cfg;
    unlabeled.dataset.label_rule = "none";
    unlabeled.out_dir = dir.file("out_unlabeled");
    unlabeled.tokenizer.vocab_path = dir.file("out/vocab.txt");
    RunResult res2 = run(unlabeled, "topics");
    CHECK(!fs::exists(dir.file("out_unlabeled/cluster_labels.tsv")));
    corpus::CsvTable refined2 = corpus::read_csv(dir.file("out_unlabeled/refined.csv"));
    for (size_t i = 0; i < 18; ++i)
        CHECK(refined2.rows[i][1] == "cluster_" + std::to_string(static_cast<int>(i / 6)));
}

TEST_CASE("evaluate scores confusion-matrix fixtures") {
    TempDir dir;
    checkpoint::write_text_file(dir.file("left.csv"), confusion_csv(kConfusionA));
    checkpoint::write_text_file(dir.file("right.csv"), confusion_csv(kConfusionB));

    PipelineConfig cfg;
    cfg.out_dir = dir.file("out");
    cfg.task.confusion = dir.file("left.csv");
    RunResult left = run(cfg, "evaluate");
    CHECK(left.summary.find("accuracy 0.698") != std::string::npos);
    CHECK(slurp(dir.file("out/report.txt")) == "samples,1039\naccuracy,0.698\n");

    cfg.task.confusion = dir.file("right.csv");
    RunResult right = run(cfg, "evaluate");
    CHECK(right.summary.find("accuracy 0.787") != std::string::npos);

    checkpoint::write_text_file(dir.file("bad.csv"), "a,b\n1,x\n");
    cfg.task.confusion = dir.file("bad.csv");
    CHECK_THROWS_AS(run(cfg, "evaluate"), ParseError);
}
