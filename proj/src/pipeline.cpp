#include "textclass/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "textclass/attribution.hpp"
#include "textclass/checkpoint.hpp"
#include "textclass/corpus.hpp"
#include "textclass/encoder.hpp"
#include "textclass/errors.hpp"
#include "textclass/metrics.hpp"
#include "textclass/tokenize.hpp"

namespace textclass::pipeline {

using nlohmann::json;

const std::vector<std::string> kSubcommands = {
    "train-tokenizer", "encode",    "train-classifier", "finetune-mlm", "finetune-task",
    "predict",         "attribute", "similarity",       "topics",       "evaluate",
};

namespace {

[[noreturn]] void bad(const std::string& msg) { throw ConfigError("config: " + msg); }

void require_cfg(bool ok, const std::string& msg) {
    if (!ok) bad(msg);
}

const json& section(const json& root, const char* key) {
    static const json empty = json::object();
    auto it = root.find(key);
    if (it == root.end()) return empty;
    if (!it->is_object()) bad(std::string(key) + " must be an object");
    return *it;
}

void check_keys(const json& obj, const std::vector<const char*>& allowed, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) bad("unknown key \"" + it.key() + "\" in " + where);
    }
}

void get_str(const json& o, const char* k, std::string& out, const char* where) {
    auto it = o.find(k);
    if (it == o.end()) return;
    if (!it->is_string()) bad(std::string(where) + "." + k + " must be a string");
    out = it->get<std::string>();
}

void get_bool(const json& o, const char* k, bool& out, const char* where) {
    auto it = o.find(k);
    if (it == o.end()) return;
    if (!it->is_boolean()) bad(std::string(where) + "." + k + " must be a boolean");
    out = it->get<bool>();
}

void get_size(const json& o, const char* k, size_t& out, const char* where) {
    auto it = o.find(k);
    if (it == o.end()) return;
    if (!it->is_number_integer() || (it->is_number_integer() && it->get<int64_t>() < 0))
        bad(std::string(where) + "." + k + " must be a non-negative integer");
    out = static_cast<size_t>(it->get<int64_t>());
}

void get_u64(const json& o, const char* k, uint64_t& out, const char* where) {
    auto it = o.find(k);
    if (it == o.end()) return;
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<int64_t>() >= 0))
        bad(std::string(where) + "." + k + " must be a non-negative integer");
    out = it->get<uint64_t>();
}

void get_double(const json& o, const char* k, double& out, const char* where) {
    auto it = o.find(k);
    if (it == o.end()) return;
    if (!it->is_number()) bad(std::string(where) + "." + k + " must be a number");
    out = it->get<double>();
}

bool one_of(const std::string& v, const std::vector<const char*>& allowed) {
    for (const char* a : allowed)
        if (v == a) return true;
    return false;
}

// Tokenizer frame size for the model actually in play.
void check_compat(const PipelineConfig& cfg, const encoder::EncoderConfig& ec, size_t vocab_size) {
    if (ec.V != vocab_size)
        bad("vocabulary has " + std::to_string(vocab_size) + " tokens but the model expects " +
            std::to_string(ec.V));
    if (cfg.tokenizer.T > ec.T_max)
        bad("tokenizer.T " + std::to_string(cfg.tokenizer.T) + " exceeds the model's T_max " +
            std::to_string(ec.T_max));
}

std::string g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string f3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

size_t argmax_row(const Tensor& probs, size_t row) {
    size_t best = 0;
    for (size_t k = 1; k < probs.cols(); ++k)
        if (probs.at(row, k) > probs.at(row, best)) best = k;
    return best;
}

// Task name implied by a subcommand; empty means any.
std::string implied_task(const std::string& sub) {
    if (sub == "encode" || sub == "train-classifier" || sub == "finetune-task" ||
        sub == "predict")
        return "classify";
    if (sub == "finetune-mlm") return "mlm";
    if (sub == "attribute" || sub == "similarity" || sub == "topics" || sub == "evaluate")
        return sub;
    return "";
}

std::string resolved_vocab_path(const PipelineConfig& cfg) {
    return cfg.tokenizer.vocab_path.empty() ? cfg.out_dir + "/vocab.txt"
                                            : cfg.tokenizer.vocab_path;
}

std::string resolved_classifier_path(const PipelineConfig& cfg) {
    return cfg.model.checkpoint.empty() ? cfg.out_dir + "/classifier.json"
                                        : cfg.model.checkpoint;
}

encoder::EncoderConfig encoder_config(const PipelineConfig& cfg, size_t V) {
    encoder::EncoderConfig ec;
    ec.V = V;
    ec.E = cfg.model.E;
    ec.H = cfg.model.H;
    ec.d_K = cfg.model.d_K;
    ec.L = cfg.model.L;
    ec.T_max = cfg.model.T_max;
    ec.F = cfg.model.F;
    ec.positional = cfg.model.positional;
    return ec;
}

train::TrainConfig train_config(const PipelineConfig& cfg) {
    train::TrainConfig tc = cfg.train.config;
    tc.seed = cfg.seed;
    return tc;
}

encoder::Pooling pooling_of(const PipelineConfig& cfg) {
    return encoder::parse_pooling(cfg.model.pooling.empty() ? "cls" : cfg.model.pooling);
}

// Accepts an encoder checkpoint or a classifier checkpoint (whose encoder
// is taken), so fine-tuned weights feed similarity/topics without repacking.
encoder::EncoderModel load_encoder_flex(const std::string& path) {
    std::string text = checkpoint::read_text_file(path);
    json j = json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.value("kind", "") == "classifier")
        return checkpoint::classifier_from_json(text).enc;
    return checkpoint::encoder_from_json(text);
}

// Full-document content ids, unframed and untruncated. A word never yields
// more subword pieces than it has characters, so summing word lengths
// bounds the frame size needed to avoid truncation.
std::vector<int> content_ids(const std::string& text, const tokenize::Vocabulary& vocab) {
    size_t bound = 3;
    for (const auto& w : tokenize::word_tokenize(tokenize::normalize(text, true)))
        bound += w.size();
    tokenize::TokenSequence seq = tokenize::wordpiece_encode(text, vocab, bound);
    std::vector<int> ids;
    for (size_t t = 0; t < seq.ids.size(); ++t) {
        if (!seq.mask[t]) break;
        if (seq.ids[t] == tokenize::Vocabulary::kCls || seq.ids[t] == tokenize::Vocabulary::kSep)
            continue;
        ids.push_back(seq.ids[t]);
    }
    return ids;
}

struct Runner {
    const PipelineConfig& cfg;
    std::string sub;
    std::ostream* log;
    std::vector<std::string> artifacts;
    std::string summary;

    Runner(const PipelineConfig& c, std::string s, std::ostream* l)
        : cfg(c), sub(std::move(s)), log(l) {}

    void write(const std::string& path, const std::string& content) {
        std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        checkpoint::write_text_file(path, content);
        artifacts.push_back(path);
        if (log) *log << "wrote " << path << "\n";
    }

    std::string out(const std::string& name) const { return cfg.out_dir + "/" + name; }

    corpus::DocumentSet load_docs() const {
        corpus::DocumentSet set;
        if (cfg.dataset.schema == "nhtsa")
            set = corpus::load_nhtsa_csv(cfg.dataset.path, cfg.dataset.language);
        else if (cfg.dataset.schema == "lgpif")
            set = corpus::load_lgpif_csv(cfg.dataset.path);
        else
            set = corpus::from_csv(corpus::read_csv(cfg.dataset.path));

        if (cfg.dataset.label_rule == "bucket_numtotv") {
            for (auto& r : set.records) {
                auto it = r.extra.find("NUMTOTV");
                if (it == r.extra.end())
                    throw SchemaError("bucket_numtotv: record " + std::to_string(r.id) +
                                      " has no NUMTOTV field");
                r.label = corpus::bucket_numtotv(it->second).name;
            }
            set.label_names = {"1", "2", "3+"};
        } else if (cfg.dataset.label_rule == "none") {
            for (auto& r : set.records) r.label.reset();
            set.label_names.clear();
        }
        return set;
    }

    tokenize::Vocabulary load_vocab() const {
        return tokenize::load_vocabulary(resolved_vocab_path(cfg));
    }

    encoder::EncoderModel encoder_source(const tokenize::Vocabulary& vocab) const {
        encoder::EncoderModel enc;
        if (!cfg.model.checkpoint.empty())
            enc = load_encoder_flex(cfg.model.checkpoint);
        else
            enc = encoder::init_encoder(encoder_config(cfg, vocab.size()), cfg.seed);
        check_compat(cfg, enc.config, vocab.size());
        return enc;
    }

    train::SequenceClassifier load_clf(const tokenize::Vocabulary& vocab) const {
        train::SequenceClassifier clf =
            checkpoint::load_classifier(resolved_classifier_path(cfg));
        check_compat(cfg, clf.enc.config, vocab.size());
        if (clf.classes.size() != clf.head_w.cols())
            throw SchemaError("classifier checkpoint: class list does not match the head");
        return clf;
    }

    std::vector<tokenize::TokenSequence> frame_all(const corpus::DocumentSet& set,
                                                   const tokenize::Vocabulary& vocab) const {
        std::vector<tokenize::TokenSequence> seqs;
        seqs.reserve(set.size());
        for (const auto& r : set.records)
            seqs.push_back(tokenize::wordpiece_encode(r.text, vocab, cfg.tokenizer.T));
        return seqs;
    }

    std::vector<std::vector<std::string>> word_lists(const corpus::DocumentSet& set) const {
        std::vector<std::vector<std::string>> out;
        out.reserve(set.size());
        for (const auto& r : set.records)
            out.push_back(tokenize::word_tokenize(tokenize::normalize(r.text, true)));
        return out;
    }

    // Label ids aligned with an explicit class order (e.g. a checkpoint's).
    std::vector<int> labels_for(const corpus::DocumentSet& set,
                                const std::vector<std::string>& classes) const {
        std::vector<int> y;
        y.reserve(set.size());
        for (const auto& r : set.records) {
            if (!r.label)
                throw LabelError("document " + std::to_string(r.id) + " has no label");
            auto it = std::find(classes.begin(), classes.end(), *r.label);
            if (it == classes.end())
                throw LabelError("label \"" + *r.label + "\" is not among the model classes");
            y.push_back(static_cast<int>(it - classes.begin()));
        }
        return y;
    }

    void write_manifest() {
        json m;
        m["command"] = sub;
        m["config"] = json::parse(config_to_json(cfg));
        m["config_hash"] = config_hash(cfg);
        m["seed"] = cfg.seed;
        m["version"] = kVersion;
        m["artifacts"] = artifacts;
        write(out("manifest.json"), m.dump(2) + "\n");
    }

    void train_tokenizer() {
        corpus::DocumentSet set = load_docs();
        std::vector<std::vector<std::string>> words = word_lists(set);
        tokenize::Vocabulary vocab =
            tokenize::train_wordpiece(words, cfg.tokenizer.vocab_size);
        std::string path = resolved_vocab_path(cfg);
        std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        tokenize::save_vocabulary(path, vocab);
        artifacts.push_back(path);
        if (log) *log << "wrote " << path << "\n";
        summary = "vocabulary of " + std::to_string(vocab.size()) + " tokens from " +
                  std::to_string(set.size()) + " documents";
    }

    void encode() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        encoder::EncoderModel enc = encoder_source(vocab);
        Tensor X = encoder::embed_pooled(frame_all(set, vocab), enc, pooling_of(cfg),
                                         cfg.model.exclude_specials);
        corpus::CsvTable t;
        t.header.push_back("id");
        for (size_t e = 0; e < X.cols(); ++e) t.header.push_back("f" + std::to_string(e));
        for (size_t i = 0; i < set.size(); ++i) {
            std::vector<std::string> row;
            row.push_back(std::to_string(set.records[i].id));
            for (size_t e = 0; e < X.cols(); ++e) row.push_back(g9(X.at(i, e)));
            t.rows.push_back(std::move(row));
        }
        write(out("features.csv"), corpus::format_csv(t));
        summary = std::to_string(set.size()) + " documents pooled to " +
                  std::to_string(X.cols()) + " features";
    }

    void train_classifier() {
        corpus::DocumentSet set = load_docs();
        if (set.label_names.empty()) throw LabelError("dataset carries no labels");
        std::vector<int> y = set.label_ids();
        tokenize::Vocabulary vocab = load_vocab();
        encoder::EncoderModel enc = encoder_source(vocab);
        Tensor X = encoder::embed_pooled(frame_all(set, vocab), enc, pooling_of(cfg),
                                         cfg.model.exclude_specials);
        train::LogRegModel model = train::train_logreg(X, y, cfg.train.l2_lambda,
                                                       train_config(cfg), set.label_names, log);
        double acc = metrics::evaluate(train::predict_logreg(model, X), y).accuracy;
        write(out("logreg.json"), checkpoint::logreg_to_json(model));
        summary = "logistic head over frozen features, training accuracy " + f3(acc);
    }

    void finetune_mlm() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        encoder::EncoderModel enc = encoder_source(vocab);
        encoder::EncoderModel tuned =
            train::train_mlm(enc, frame_all(set, vocab), train_config(cfg), log);
        write(out("encoder.json"), checkpoint::encoder_to_json(tuned));
        summary = "masked-token fine-tuning over " + std::to_string(set.size()) + " documents";
    }

    void finetune_task() {
        corpus::DocumentSet set = load_docs();
        if (set.label_names.empty()) throw LabelError("dataset carries no labels");
        std::vector<int> y = set.label_ids();
        tokenize::Vocabulary vocab = load_vocab();
        train::SequenceClassifier clf;
        clf.enc = encoder_source(vocab);
        clf.pooling = pooling_of(cfg);
        clf.exclude_specials = cfg.model.exclude_specials;
        clf.classes = set.label_names;
        // Zero head: the first update breaks the symmetry, and a fresh run
        // needs no extra draw from the seed stream.
        clf.head_w = Tensor(clf.enc.config.E, set.label_names.size());
        clf.head_b = Tensor(1, set.label_names.size());
        train::SequenceClassifier tuned =
            train::train_task(clf, frame_all(set, vocab), y, train_config(cfg), log);
        write(out("classifier.json"), checkpoint::classifier_to_json(tuned));
        summary = "task fine-tuning, " + std::to_string(set.label_names.size()) +
                  " classes over " + std::to_string(set.size()) + " documents";
    }

    // Probabilities for one record under the current task settings.
    Tensor doc_probs(const train::SequenceClassifier& clf, const tokenize::Vocabulary& vocab,
                     const corpus::DocumentRecord& r, int* label_out) const {
        if (cfg.task.chunk) {
            train::LongPrediction lp =
                train::predict_long(clf, content_ids(r.text, vocab), cfg.tokenizer.T,
                                    cfg.tokenizer.stride, train::parse_combine(cfg.task.combine));
            Tensor mean(1, lp.chunk_probs.cols());
            for (size_t c = 0; c < lp.chunk_probs.cols(); ++c) {
                double s = 0.0;
                for (size_t i = 0; i < lp.chunk_probs.rows(); ++i) s += lp.chunk_probs.at(i, c);
                mean.at(0, c) = s / static_cast<double>(lp.chunk_probs.rows());
            }
            if (label_out) *label_out = lp.label;
            return mean;
        }
        Tensor p = train::predict_probs(
            clf, tokenize::wordpiece_encode(r.text, vocab, cfg.tokenizer.T));
        if (label_out) *label_out = static_cast<int>(argmax_row(p, 0));
        return p;
    }

    void predict() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        train::SequenceClassifier clf = load_clf(vocab);
        corpus::CsvTable t;
        t.header = {"id", "label"};
        for (const auto& c : clf.classes) t.header.push_back("p_" + c);
        for (const auto& r : set.records) {
            int label = 0;
            Tensor p = doc_probs(clf, vocab, r, &label);
            std::vector<std::string> row{std::to_string(r.id), clf.classes[label]};
            for (size_t k = 0; k < p.cols(); ++k) row.push_back(g9(p.at(0, k)));
            t.rows.push_back(std::move(row));
        }
        write(out("predictions.csv"), corpus::format_csv(t));
        summary = std::to_string(set.size()) + " documents classified" +
                  (cfg.task.chunk ? " in chunks" : "");
    }

    void attribute() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        train::SequenceClassifier clf = load_clf(vocab);
        int target = -1;
        if (!cfg.task.target.empty()) {
            auto it = std::find(clf.classes.begin(), clf.classes.end(), cfg.task.target);
            if (it == clf.classes.end())
                bad("task.target \"" + cfg.task.target + "\" is not a model class");
            target = static_cast<int>(it - clf.classes.begin());
        }
        std::vector<attribution::AttributedDoc> docs;
        docs.reserve(set.size());
        for (const auto& r : set.records) {
            tokenize::TokenSequence seq =
                tokenize::wordpiece_encode(r.text, vocab, cfg.tokenizer.T);
            Tensor p = train::predict_probs(clf, seq);
            int pred = static_cast<int>(argmax_row(p, 0));
            attribution::AttributedDoc d;
            d.doc_id = std::to_string(r.id);
            d.true_label = r.label.value_or("");
            d.predicted_label = clf.classes[pred];
            d.result = attribution::integrated_gradients(clf, seq, target >= 0 ? target : pred,
                                                         cfg.task.steps);
            size_t keep = 0;
            while (keep < seq.mask.size() && seq.mask[keep]) ++keep;
            for (size_t tpos = 0; tpos < keep; ++tpos)
                d.tokens.push_back(vocab.tokens[seq.ids[tpos]]);
            d.result.scores.resize(keep);  // padding rows score exactly zero
            docs.push_back(std::move(d));
        }
        write(out("attributions.html"), attribution::render_report_html(docs));
        write(out("attributions.csv"), attribution::attribution_csv(docs));
        summary = std::to_string(set.size()) + " documents attributed at " +
                  std::to_string(cfg.task.steps) + " steps";
    }

    void similarity() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        encoder::EncoderModel enc = encoder_source(vocab);
        unsupervised::ExpressionMapping mapping =
            unsupervised::load_expression_mapping(cfg.task.expressions);
        std::vector<tokenize::TokenSequence> exprs;
        std::vector<std::string> labels;
        for (const auto& e : mapping.entries) {
            exprs.push_back(tokenize::wordpiece_encode(e.expression, vocab, cfg.tokenizer.T));
            labels.push_back(e.label);
        }
        unsupervised::SimilarityResult res =
            unsupervised::similarity_classify(frame_all(set, vocab), exprs, labels, enc,
                                              pooling_of(cfg), cfg.model.exclude_specials);
        size_t fb = labels.size();
        if (!cfg.task.fallback_label.empty()) {
            size_t hits = 0;
            for (size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == cfg.task.fallback_label) fb = i, ++hits;
            if (hits != 1)
                bad("task.fallback_label must name exactly one expression, found " +
                    std::to_string(hits));
        }
        corpus::CsvTable t;
        t.header = {"id", "label", "best", "score"};
        for (size_t i = 0; i < set.size(); ++i) {
            size_t best = res.best[i];
            if (fb < labels.size()) {
                std::vector<double> row(labels.size());
                for (size_t j = 0; j < labels.size(); ++j) row[j] = res.scores.at(i, j);
                best = unsupervised::fallback_margin(row, fb, cfg.task.fallback_threshold_pp);
            }
            t.rows.push_back({std::to_string(set.records[i].id), labels[best],
                              std::to_string(best), g9(res.scores.at(i, best))});
        }
        write(out("labels.csv"), corpus::format_csv(t));
        summary = std::to_string(set.size()) + " documents labeled against " +
                  std::to_string(labels.size()) + " expressions";
    }

    void topics() {
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        encoder::EncoderModel enc = encoder_source(vocab);
        encoder::Pooling pool = pooling_of(cfg);
        Tensor X = encoder::embed_pooled(frame_all(set, vocab), enc, pool,
                                         cfg.model.exclude_specials);
        std::vector<std::vector<std::string>> doc_words = word_lists(set);
        std::vector<std::string> wvocab = unsupervised::build_word_vocab(doc_words);
        std::vector<tokenize::TokenSequence> word_seqs;
        word_seqs.reserve(wvocab.size());
        for (const auto& w : wvocab)
            word_seqs.push_back(tokenize::wordpiece_encode(w, vocab, cfg.tokenizer.T));
        Tensor W = encoder::embed_pooled(word_seqs, enc, pool, cfg.model.exclude_specials);

        std::vector<int> labels;
        bool any_label = false;
        labels.reserve(set.size());
        for (const auto& r : set.records) {
            int id = r.label ? set.label_index(*r.label) : -1;
            any_label = any_label || id >= 0;
            labels.push_back(id);
        }
        unsupervised::TopicModel model = unsupervised::topic_pipeline(
            X, doc_words, wvocab, W, cfg.task.topics, any_label ? &labels : nullptr);

        write(out("topics.csv"), unsupervised::topic_report_csv(model));
        corpus::CsvTable t;
        t.header = {"id", "cluster"};
        for (size_t i = 0; i < set.size(); ++i)
            t.rows.push_back(
                {std::to_string(set.records[i].id), std::to_string(model.cluster_ids[i])});
        write(out("clusters.csv"), corpus::format_csv(t));
        if (!model.label_map.empty())
            write(out("cluster_labels.tsv"),
                  unsupervised::format_cluster_map(model.label_map, set.label_names));
        if (cfg.task.refine) refine(set, X, model);

        size_t outliers = 0;
        for (int c : model.cluster_ids) outliers += c < 0;
        summary = std::to_string(model.clusters.size()) + " clusters, " +
                  std::to_string(outliers) + " outliers, eps " + g9(model.eps);
    }

    // Retrains a classifier on the cluster assignments (outliers excluded)
    // and relabels every document with it, outliers included.
    void refine(const corpus::DocumentSet& set, const Tensor& X,
                const unsupervised::TopicModel& model) {
        std::vector<std::string> classes;
        std::vector<size_t> rows;
        std::vector<int> y;
        for (size_t i = 0; i < set.size(); ++i) {
            int cid = model.cluster_ids[i];
            if (cid < 0) continue;
            rows.push_back(i);
            if (!model.label_map.empty()) {
                y.push_back(model.label_map.at(cid));
            } else {
                auto it = std::find(model.clusters.begin(), model.clusters.end(), cid);
                y.push_back(static_cast<int>(it - model.clusters.begin()));
            }
        }
        if (!model.label_map.empty())
            classes = set.label_names;
        else
            for (int c : model.clusters) classes.push_back("cluster_" + std::to_string(c));
        Tensor Xr(rows.size(), X.cols());
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t c = 0; c < X.cols(); ++c) Xr.at(i, c) = X.at(rows[i], c);
        train::LogRegModel lr = train::train_logreg(Xr, y, cfg.train.l2_lambda,
                                                    train_config(cfg), classes, log);
        Tensor P = train::predict_logreg(lr, X);
        corpus::CsvTable t;
        t.header = {"id", "label"};
        for (size_t i = 0; i < set.size(); ++i)
            t.rows.push_back(
                {std::to_string(set.records[i].id), classes[argmax_row(P, i)]});
        write(out("refined.csv"), corpus::format_csv(t));
    }

    void evaluate() {
        if (!cfg.task.confusion.empty()) {
            corpus::CsvTable t = corpus::read_csv(cfg.task.confusion);
            std::vector<std::vector<int64_t>> m;
            for (const auto& row : t.rows) {
                std::vector<int64_t> r;
                for (const auto& cell : row) {
                    size_t pos = 0;
                    int64_t v = 0;
                    try {
                        v = std::stoll(cell, &pos);
                    } catch (const std::exception&) {
                        pos = std::string::npos;
                    }
                    if (pos != cell.size())
                        throw ParseError("confusion matrix: bad count \"" + cell + "\"");
                    r.push_back(v);
                }
                m.push_back(std::move(r));
            }
            double acc = metrics::confusion_accuracy(m);
            int64_t total = 0;
            for (const auto& row : m)
                for (int64_t v : row) total += v;
            std::string report = "samples," + std::to_string(total) + "\naccuracy," + f3(acc) +
                                 "\n";
            write(out("report.txt"), report);
            summary = "accuracy " + f3(acc) + " over " + std::to_string(total) + " samples";
            return;
        }
        corpus::DocumentSet set = load_docs();
        tokenize::Vocabulary vocab = load_vocab();
        train::SequenceClassifier clf = load_clf(vocab);
        std::vector<int> y = labels_for(set, clf.classes);
        Tensor P(set.size(), clf.classes.size());
        for (size_t i = 0; i < set.size(); ++i) {
            Tensor p = doc_probs(clf, vocab, set.records[i], nullptr);
            for (size_t k = 0; k < p.cols(); ++k) P.at(i, k) = p.at(0, k);
        }
        metrics::MetricsReport rep = metrics::evaluate(P, y);
        write(out("report.txt"), metrics::format_report(rep));
        summary = "accuracy " + f3(rep.accuracy) + ", log loss " + f3(rep.log_loss) +
                  ", brier " + f3(rep.brier);
    }
};

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        bad(std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) bad("top level must be an object");
    check_keys(root, {"seed", "out_dir", "dataset", "tokenizer", "model", "train", "task"},
               "top level");

    PipelineConfig cfg;
    get_u64(root, "seed", cfg.seed, "top level");
    get_str(root, "out_dir", cfg.out_dir, "top level");

    const json& d = section(root, "dataset");
    check_keys(d, {"path", "schema", "text_column", "language", "label_rule"}, "dataset");
    get_str(d, "path", cfg.dataset.path, "dataset");
    get_str(d, "schema", cfg.dataset.schema, "dataset");
    get_str(d, "text_column", cfg.dataset.text_column, "dataset");
    get_str(d, "language", cfg.dataset.language, "dataset");
    get_str(d, "label_rule", cfg.dataset.label_rule, "dataset");

    const json& tk = section(root, "tokenizer");
    check_keys(tk, {"mode", "vocab_path", "vocab_size", "T", "stride"}, "tokenizer");
    get_str(tk, "mode", cfg.tokenizer.mode, "tokenizer");
    get_str(tk, "vocab_path", cfg.tokenizer.vocab_path, "tokenizer");
    get_size(tk, "vocab_size", cfg.tokenizer.vocab_size, "tokenizer");
    get_size(tk, "T", cfg.tokenizer.T, "tokenizer");
    get_size(tk, "stride", cfg.tokenizer.stride, "tokenizer");

    const json& m = section(root, "model");
    check_keys(m,
               {"checkpoint", "E", "H", "d_K", "L", "T_max", "F", "positional", "pooling",
                "exclude_specials"},
               "model");
    get_str(m, "checkpoint", cfg.model.checkpoint, "model");
    get_size(m, "E", cfg.model.E, "model");
    get_size(m, "H", cfg.model.H, "model");
    get_size(m, "d_K", cfg.model.d_K, "model");
    get_size(m, "L", cfg.model.L, "model");
    get_size(m, "T_max", cfg.model.T_max, "model");
    get_size(m, "F", cfg.model.F, "model");
    get_bool(m, "positional", cfg.model.positional, "model");
    get_str(m, "pooling", cfg.model.pooling, "model");
    get_bool(m, "exclude_specials", cfg.model.exclude_specials, "model");

    const json& tr = section(root, "train");
    check_keys(tr,
               {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "p_mask",
                "freeze_encoder", "l2_lambda", "approach"},
               "train");
    get_size(tr, "epochs", cfg.train.config.epochs, "train");
    get_size(tr, "batch_size", cfg.train.config.batch_size, "train");
    get_double(tr, "lr", cfg.train.config.lr, "train");
    get_double(tr, "beta1", cfg.train.config.beta1, "train");
    get_double(tr, "beta2", cfg.train.config.beta2, "train");
    get_double(tr, "eps", cfg.train.config.eps, "train");
    get_double(tr, "p_mask", cfg.train.config.p_mask, "train");
    get_bool(tr, "freeze_encoder", cfg.train.config.freeze_encoder, "train");
    get_double(tr, "l2_lambda", cfg.train.l2_lambda, "train");
    get_str(tr, "approach", cfg.train.approach, "train");

    const json& ts = section(root, "task");
    check_keys(ts,
               {"name", "chunk", "combine", "expressions", "fallback_label",
                "fallback_threshold_pp", "target", "steps", "pca_k", "eps", "eps_quantile",
                "min_pts", "mmr_lambda", "top_k", "refine", "confusion"},
               "task");
    get_str(ts, "name", cfg.task.name, "task");
    get_bool(ts, "chunk", cfg.task.chunk, "task");
    get_str(ts, "combine", cfg.task.combine, "task");
    get_str(ts, "expressions", cfg.task.expressions, "task");
    get_str(ts, "fallback_label", cfg.task.fallback_label, "task");
    get_double(ts, "fallback_threshold_pp", cfg.task.fallback_threshold_pp, "task");
    get_str(ts, "target", cfg.task.target, "task");
    get_size(ts, "steps", cfg.task.steps, "task");
    get_size(ts, "pca_k", cfg.task.topics.pca_k, "task");
    get_double(ts, "eps", cfg.task.topics.eps, "task");
    get_double(ts, "eps_quantile", cfg.task.topics.eps_quantile, "task");
    get_size(ts, "min_pts", cfg.task.topics.min_pts, "task");
    get_double(ts, "mmr_lambda", cfg.task.topics.mmr_lambda, "task");
    get_size(ts, "top_k", cfg.task.topics.top_k, "task");
    get_bool(ts, "refine", cfg.task.refine, "task");
    get_str(ts, "confusion", cfg.task.confusion, "task");
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = checkpoint::read_text_file(path);
    } catch (const IoError& e) {
        bad(std::string("cannot read config: ") + e.what());
    }
    return parse_config(text);
}

std::string config_to_json(const PipelineConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["out_dir"] = cfg.out_dir;
    json& d = root["dataset"];
    d["path"] = cfg.dataset.path;
    d["schema"] = cfg.dataset.schema;
    d["text_column"] = cfg.dataset.text_column;
    d["language"] = cfg.dataset.language;
    d["label_rule"] = cfg.dataset.label_rule;
    json& tk = root["tokenizer"];
    tk["mode"] = cfg.tokenizer.mode;
    tk["vocab_path"] = cfg.tokenizer.vocab_path;
    tk["vocab_size"] = cfg.tokenizer.vocab_size;
    tk["T"] = cfg.tokenizer.T;
    tk["stride"] = cfg.tokenizer.stride;
    json& m = root["model"];
    m["checkpoint"] = cfg.model.checkpoint;
    m["E"] = cfg.model.E;
    m["H"] = cfg.model.H;
    m["d_K"] = cfg.model.d_K;
    m["L"] = cfg.model.L;
    m["T_max"] = cfg.model.T_max;
    m["F"] = cfg.model.F;
    m["positional"] = cfg.model.positional;
    m["pooling"] = cfg.model.pooling;
    m["exclude_specials"] = cfg.model.exclude_specials;
    json& tr = root["train"];
    tr["epochs"] = cfg.train.config.epochs;
    tr["batch_size"] = cfg.train.config.batch_size;
    tr["lr"] = cfg.train.config.lr;
    tr["beta1"] = cfg.train.config.beta1;
    tr["beta2"] = cfg.train.config.beta2;
    tr["eps"] = cfg.train.config.eps;
    tr["p_mask"] = cfg.train.config.p_mask;
    tr["freeze_encoder"] = cfg.train.config.freeze_encoder;
    tr["l2_lambda"] = cfg.train.l2_lambda;
    tr["approach"] = cfg.train.approach;
    json& ts = root["task"];
    ts["name"] = cfg.task.name;
    ts["chunk"] = cfg.task.chunk;
    ts["combine"] = cfg.task.combine;
    ts["expressions"] = cfg.task.expressions;
    ts["fallback_label"] = cfg.task.fallback_label;
    ts["fallback_threshold_pp"] = cfg.task.fallback_threshold_pp;
    ts["target"] = cfg.task.target;
    ts["steps"] = cfg.task.steps;
    ts["pca_k"] = cfg.task.topics.pca_k;
    ts["eps"] = cfg.task.topics.eps;
    ts["eps_quantile"] = cfg.task.topics.eps_quantile;
    ts["min_pts"] = cfg.task.topics.min_pts;
    ts["mmr_lambda"] = cfg.task.topics.mmr_lambda;
    ts["top_k"] = cfg.task.topics.top_k;
    ts["refine"] = cfg.task.refine;
    ts["confusion"] = cfg.task.confusion;
    return root.dump(2);
}

std::string config_hash(const PipelineConfig& cfg) {
    std::string text = config_to_json(cfg);
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void validate(const PipelineConfig& cfg, const std::string& sub) {
    require_cfg(std::find(kSubcommands.begin(), kSubcommands.end(), sub) != kSubcommands.end(),
                "unknown subcommand \"" + sub + "\"");
    require_cfg(!cfg.out_dir.empty(), "out_dir must not be empty");
    require_cfg(one_of(cfg.dataset.schema, {"generic", "nhtsa", "lgpif"}),
                "dataset.schema must be generic, nhtsa or lgpif");
    require_cfg(one_of(cfg.dataset.label_rule, {"column", "bucket_numtotv", "none"}),
                "dataset.label_rule must be column, bucket_numtotv or none");
    require_cfg(cfg.tokenizer.mode == "wordpiece", "tokenizer.mode must be wordpiece");
    require_cfg(cfg.tokenizer.T >= 3, "tokenizer.T must be at least 3");
    require_cfg(cfg.tokenizer.stride >= 1, "tokenizer.stride must be at least 1");
    require_cfg(one_of(cfg.train.approach, {"B", "C"}), "train.approach must be B or C");
    require_cfg(one_of(cfg.model.pooling, {"", "cls", "mean"}),
                "model.pooling must be cls or mean");
    if (cfg.train.approach == "B")
        require_cfg(!cfg.model.pooling.empty(),
                    "approach B requires an explicit model.pooling");
    require_cfg(cfg.train.l2_lambda >= 0.0, "train.l2_lambda must be non-negative");
    require_cfg(cfg.task.steps >= 1, "task.steps must be at least 1");
    require_cfg(cfg.task.fallback_threshold_pp >= 0.0,
                "task.fallback_threshold_pp must be non-negative");
    train::parse_combine(cfg.task.combine);
    encoder_config(cfg, 5).validate();
    require_cfg(cfg.tokenizer.T <= cfg.model.T_max,
                "tokenizer.T must not exceed model.T_max");
    train_config(cfg).validate();
    cfg.task.topics.validate();

    std::string implied = implied_task(sub);
    if (!cfg.task.name.empty()) {
        require_cfg(one_of(cfg.task.name,
                           {"classify", "mlm", "attribute", "similarity", "topics", "evaluate"}),
                    "unknown task.name \"" + cfg.task.name + "\"");
        if (!implied.empty())
            require_cfg(cfg.task.name == implied,
                        "task.name \"" + cfg.task.name + "\" does not fit " + sub);
    }
    if (sub == "train-classifier")
        require_cfg(cfg.train.approach == "B", "train-classifier runs approach B");
    if (sub == "finetune-task")
        require_cfg(cfg.train.approach == "C", "finetune-task runs approach C");
    if (sub == "train-tokenizer")
        require_cfg(cfg.tokenizer.vocab_size >= tokenize::Vocabulary::special_tokens().size() + 1,
                    "tokenizer.vocab_size leaves no room beyond the special tokens");

    auto exists = [](const std::string& p) { return std::filesystem::exists(p); };
    auto require_file = [&](const std::string& p, const std::string& what) {
        require_cfg(!p.empty(), what + " is required for " + sub);
        require_cfg(exists(p), what + " \"" + p + "\" does not exist");
    };

    bool fixture_eval = sub == "evaluate" && !cfg.task.confusion.empty();
    if (!fixture_eval) require_file(cfg.dataset.path, "dataset.path");
    if (sub != "train-tokenizer" && !fixture_eval)
        require_file(resolved_vocab_path(cfg), "vocabulary");
    if (!cfg.model.checkpoint.empty())
        require_file(cfg.model.checkpoint, "model.checkpoint");
    if (sub == "predict" || sub == "attribute" || (sub == "evaluate" && !fixture_eval))
        require_file(resolved_classifier_path(cfg), "classifier checkpoint");
    if (sub == "similarity") require_file(cfg.task.expressions, "task.expressions");
    if (fixture_eval) require_file(cfg.task.confusion, "task.confusion");
}

RunResult run(const PipelineConfig& cfg, const std::string& sub, std::ostream* log) {
    validate(cfg, sub);
    Runner r(cfg, sub, log);
    if (sub == "train-tokenizer")
        r.train_tokenizer();
    else if (sub == "encode")
        r.encode();
    else if (sub == "train-classifier")
        r.train_classifier();
    else if (sub == "finetune-mlm")
        r.finetune_mlm();
    else if (sub == "finetune-task")
        r.finetune_task();
    else if (sub == "predict")
        r.predict();
    else if (sub == "attribute")
        r.attribute();
    else if (sub == "similarity")
        r.similarity();
    else if (sub == "topics")
        r.topics();
    else
        r.evaluate();
    r.write_manifest();
    if (log) *log << r.summary << "\n";
    return {std::move(r.artifacts), std::move(r.summary)};
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    return 2;
}

}  // namespace textclass::pipeline
