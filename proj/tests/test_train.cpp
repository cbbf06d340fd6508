#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "textclass/checkpoint.hpp"
#include "textclass/rng.hpp"
#include "textclass/train.hpp"

using namespace textclass;
using namespace textclass::train;

namespace {

tokenize::TokenSequence make_seq(std::vector<int> content, size_t T) {
    tokenize::TokenSequence s;
    s.ids = {tokenize::Vocabulary::kCls};
    for (int id : content) s.ids.push_back(id);
    s.ids.push_back(tokenize::Vocabulary::kSep);
    s.mask.assign(s.ids.size(), 1);
    while (s.ids.size() < T) {
        s.ids.push_back(tokenize::Vocabulary::kPad);
        s.mask.push_back(0);
    }
    return s;
}

encoder::EncoderConfig toy_config() {
    encoder::EncoderConfig c;
    c.V = 12;
    c.E = 8;
    c.H = 2;
    c.d_K = 4;
    c.L = 1;
    c.T_max = 10;
    c.F = 16;
    return c;
}

// Mean cross-entropy of the tied-head MLM objective on fixed maskings.
double mlm_eval(const encoder::EncoderModel& m,
                const std::vector<tokenize::TokenSequence>& seqs, double p_mask,
                uint64_t seed) {
    double total = 0.0;
    size_t counted = 0;
    for (size_t i = 0; i < seqs.size(); ++i) {
        MaskedSequence ms = mlm_prepare(seqs[i], p_mask, seed + i);
        if (ms.positions.empty()) continue;
        autodiff::Graph g;
        encoder::EncoderNodes nodes = encoder::register_params(g, m, false);
        encoder::ForwardNodes f = encode_nodes(g, nodes, m.config, ms.seq.ids, ms.seq.mask);
        autodiff::NodeRef rows = g.take_rows(f.Z, ms.positions);
        autodiff::NodeRef logits = g.matmul_nt(rows, nodes.W_emb);
        total += g.cross_entropy_probs(g.softmax_rows(logits), ms.targets)->value.at(0, 0);
        ++counted;
    }
    REQUIRE(counted > 0);
    return total / static_cast<double>(counted);
}

SequenceClassifier fresh_classifier(const encoder::EncoderConfig& cfg, size_t K,
                                    uint64_t seed) {
    SequenceClassifier c;
    c.enc = encoder::init_encoder(cfg, seed);
    c.pooling = encoder::Pooling::kMean;
    c.head_w = Tensor(cfg.E, K);
    c.head_b = Tensor(1, K);
    SplitMix64 rng(seed + 1);
    for (auto& v : c.head_w.vec()) v = rng.next_symmetric(0.3);
    for (size_t k = 0; k < K; ++k) c.classes.push_back(std::to_string(k));
    return c;
}

}  // namespace

TEST_CASE("a single adam step moves a weight by roughly the learning rate") {
    Tensor w(1, 1, {0.0});
    Tensor g(1, 1, {5.0});
    Adam adam(1e-3, 0.9, 0.999, 1e-8);
    adam.step({&w}, {&g});
    // Bias-corrected m-hat = g, v-hat = g^2, so the step is lr within eps.
    CHECK(std::abs(w.at(0, 0) + 1e-3) <= 1e-11);
}

TEST_CASE("logistic regression separates a linearly separable toy set") {
    Tensor X(6, 2, {-2.0, -1.0, -1.0, -2.0, -1.5, -1.5, 2.0, 1.0, 1.0, 2.0, 1.5, 1.5});
    std::vector<int> y{0, 0, 0, 1, 1, 1};
    TrainConfig cfg;
    cfg.epochs = 2000;
    std::ostringstream log;
    LogRegModel m = train_logreg(X, y, 1e-4, cfg, {"neg", "pos"}, &log);
    Tensor p = predict_logreg(m, X);
    for (size_t i = 0; i < 6; ++i) {
        size_t arg = p.at(i, 0) >= p.at(i, 1) ? 0 : 1;
        CHECK(arg == static_cast<size_t>(y[i]));
    }

    SUBCASE("the logged objective never increases by more than 1e-8") {
        std::string line;
        std::istringstream in(log.str());
        double prev = 1e18;
        size_t lines = 0;
        while (std::getline(in, line)) {
            size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
            REQUIRE(c2 != std::string::npos);
            double loss = std::stod(line.substr(c2 + 1));
            CHECK(loss <= prev + 1e-8);
            prev = loss;
            ++lines;
        }
        CHECK(lines >= 10);
    }
}

TEST_CASE("overwhelming regularization reduces predictions to class priors") {
    // 9 rows of class 0, 3 of class 1: priors 0.75 / 0.25.
    Tensor X(12, 2);
    SplitMix64 rng(4);
    for (auto& v : X.vec()) v = rng.next_symmetric(1.0);
    std::vector<int> y{0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
    TrainConfig cfg;
    cfg.epochs = 20000;
    LogRegModel m = train_logreg(X, y, 1e6, cfg);
    Tensor p = predict_logreg(m, X);
    for (size_t i = 0; i < 12; ++i) {
        CHECK(std::abs(p.at(i, 0) - 0.75) <= 0.01);
        CHECK(std::abs(p.at(i, 1) - 0.25) <= 0.01);
    }
}

TEST_CASE("duplicating every training row leaves the optimum unchanged") {
    Tensor X(4, 2, {-1.0, 0.5, -0.5, 1.0, 1.0, -0.5, 0.5, -1.0});
    std::vector<int> y{0, 0, 1, 1};
    Tensor X2(8, 2);
    std::vector<int> y2;
    for (size_t r = 0; r < 8; ++r)
        for (size_t c = 0; c < 2; ++c) X2.at(r, c) = X.at(r % 4, c);
    for (size_t r = 0; r < 8; ++r) y2.push_back(y[r % 4]);

    TrainConfig cfg;
    cfg.epochs = 500;
    LogRegModel a = train_logreg(X, y, 1e-3, cfg);
    LogRegModel b = train_logreg(X2, y2, 1e-3, cfg);
    for (size_t i = 0; i < a.weights.size(); ++i)
        CHECK(std::abs(a.weights[i] - b.weights[i]) <= 1e-6);
    for (size_t i = 0; i < a.bias.size(); ++i)
        CHECK(std::abs(a.bias[i] - b.bias[i]) <= 1e-6);
}

TEST_CASE("logreg prediction basics") {
    LogRegModel m;
    m.weights = Tensor(3, 4);
    m.bias = Tensor(1, 4);
    m.classes = {"a", "b", "c", "d"};
    Tensor X(2, 3, {1.0, -2.0, 0.5, 0.0, 3.0, -1.0});
    Tensor p = predict_logreg(m, X);
    for (size_t i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (size_t k = 0; k < 4; ++k) {
            CHECK(std::abs(p.at(i, k) - 0.25) <= 1e-12);
            sum += p.at(i, k);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }

    SUBCASE("adding a constant to every bias entry changes nothing") {
        LogRegModel shifted = m;
        SplitMix64 rng(6);
        for (auto& v : shifted.weights.vec()) v = rng.next_symmetric(1.0);
        m.weights = shifted.weights;
        for (auto& v : shifted.bias.vec()) v += 7.5;
        Tensor pa = predict_logreg(m, X);
        Tensor pb = predict_logreg(shifted, X);
        for (size_t i = 0; i < pa.size(); ++i) CHECK(std::abs(pa[i] - pb[i]) <= 1e-12);
    }
    SUBCASE("width mismatch is a shape error") {
        CHECK_THROWS_AS(predict_logreg(m, Tensor(2, 5, 1.0)), ShapeError);
    }
}

TEST_CASE("train_logreg validates its inputs") {
    TrainConfig cfg;
    CHECK_THROWS_AS(train_logreg(Tensor(3, 0), {0, 1, 0}, 0.0, cfg), DomainError);
    CHECK_THROWS_AS(train_logreg(Tensor(1, 2, {1.0, 2.0}), {0}, 0.0, cfg), DomainError);
    CHECK_THROWS_AS(
        train_logreg(Tensor(2, 2, {1.0, 2.0, 3.0, 4.0}), {0, 1}, -0.5, cfg), DomainError);
    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(
        train_logreg(Tensor(2, 2, {1.0, 2.0, 3.0, 4.0}), {0, 1}, 0.0, bad), ConfigError);
    bad = TrainConfig{};
    bad.p_mask = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mlm_prepare masks eligible positions only") {
    tokenize::TokenSequence seq;
    seq.ids = {2, 5, 6, 1, 3, 0};
    seq.mask = {1, 1, 1, 1, 1, 0};

    SUBCASE("p=0 changes nothing") {
        MaskedSequence ms = mlm_prepare(seq, 0.0, 7);
        CHECK(ms.seq.ids == seq.ids);
        CHECK(ms.positions.empty());
        CHECK(ms.targets.empty());
    }
    SUBCASE("p=1 masks every non-special content position") {
        MaskedSequence ms = mlm_prepare(seq, 1.0, 7);
        CHECK(ms.positions == std::vector<int>{1, 2});
        CHECK(ms.targets == std::vector<int>{5, 6});
        CHECK(ms.seq.ids == std::vector<int>{2, 4, 4, 1, 3, 0});
        CHECK(ms.seq.mask == seq.mask);
    }
    SUBCASE("identical seeds agree, different seeds eventually differ") {
        MaskedSequence a = mlm_prepare(seq, 0.5, 99);
        MaskedSequence b = mlm_prepare(seq, 0.5, 99);
        CHECK(a.seq.ids == b.seq.ids);
        CHECK(a.positions == b.positions);
        bool diverged = false;
        for (uint64_t s = 0; s < 64 && !diverged; ++s)
            diverged = mlm_prepare(seq, 0.5, s).seq.ids != a.seq.ids;
        CHECK(diverged);
    }
}

TEST_CASE("mlm masking rate concentrates around p_mask") {
    tokenize::TokenSequence seq;
    seq.ids.assign(100000, 10);
    seq.mask.assign(100000, 1);
    MaskedSequence ms = mlm_prepare(seq, 0.15, 2024);
    double fraction = static_cast<double>(ms.positions.size()) / 100000.0;
    CHECK(std::abs(fraction - 0.15) <= 0.005);
}

TEST_CASE("masked-token fine-tuning lowers held-out masked cross-entropy") {
    encoder::EncoderConfig cfg = toy_config();
    encoder::EncoderModel m = encoder::init_encoder(cfg, 13);

    // Synthetic text with strong bigram structure: 6 follows 5, 8 follows
    // 7, 10 follows 9.
    std::vector<tokenize::TokenSequence> corpus, heldout;
    SplitMix64 rng(14);
    for (size_t i = 0; i < 40; ++i) {
        int a = 5 + 2 * static_cast<int>(rng.next_below(3));
        std::vector<int> content{a, a + 1, a, a + 1, a, a + 1};
        (i < 32 ? corpus : heldout).push_back(make_seq(content, cfg.T_max));
    }

    double before = mlm_eval(m, heldout, 0.3, 555);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.p_mask = 0.3;
    tc.seed = 15;
    std::ostringstream log;
    encoder::EncoderModel tuned = train_mlm(m, corpus, tc, &log);
    double after = mlm_eval(tuned, heldout, 0.3, 555);
    CHECK(after < before);
    CHECK(log.str().find("1,1,") == 0);

    SUBCASE("identical seeds give byte-identical tuned checkpoints") {
        encoder::EncoderModel again = train_mlm(m, corpus, tc);
        CHECK(checkpoint::encoder_to_json(again) == checkpoint::encoder_to_json(tuned));
    }
    SUBCASE("p_mask=0 leaves parameters untouched") {
        TrainConfig zero = tc;
        zero.p_mask = 0.0;
        encoder::EncoderModel same = train_mlm(m, corpus, zero);
        CHECK(checkpoint::encoder_to_json(same) == checkpoint::encoder_to_json(m));
    }
}

TEST_CASE("task training fits a token-signature synthetic corpus") {
    encoder::EncoderConfig cfg = toy_config();
    SequenceClassifier base = fresh_classifier(cfg, 3, 70);

    // Class k is marked by token 5+k; fillers 8..11 are shared noise.
    std::vector<tokenize::TokenSequence> train_seqs, test_seqs;
    std::vector<int> train_labels, test_labels;
    SplitMix64 rng(71);
    for (size_t i = 0; i < 33; ++i) {
        int label = static_cast<int>(i % 3);
        std::vector<int> content;
        content.push_back(5 + label);
        for (size_t f = 0; f < 3; ++f)
            content.push_back(8 + static_cast<int>(rng.next_below(4)));
        shuffle(content, rng);
        if (i < 24) {
            train_seqs.push_back(make_seq(content, cfg.T_max));
            train_labels.push_back(label);
        } else {
            test_seqs.push_back(make_seq(content, cfg.T_max));
            test_labels.push_back(label);
        }
    }

    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 8;
    tc.lr = 1e-2;
    tc.seed = 72;
    std::ostringstream log;
    SequenceClassifier fitted = train_task(base, train_seqs, train_labels, tc, &log);

    size_t hits = 0;
    for (size_t i = 0; i < test_seqs.size(); ++i) {
        Tensor p = predict_probs(fitted, test_seqs[i]);
        size_t arg = 0;
        double sum = 0.0;
        for (size_t k = 0; k < 3; ++k) {
            if (p.at(0, k) > p.at(0, arg)) arg = k;
            sum += p.at(0, k);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        hits += arg == static_cast<size_t>(test_labels[i]);
    }
    CHECK(static_cast<double>(hits) / test_seqs.size() >= 0.95);

    SUBCASE("every logged loss is finite") {
        std::istringstream in(log.str());
        std::string line;
        size_t rows = 0;
        while (std::getline(in, line)) {
            size_t c2 = line.rfind(',');
            CHECK(std::isfinite(std::stod(line.substr(c2 + 1))));
            ++rows;
        }
        CHECK(rows == tc.epochs * 3);  // 24 examples / batches of 8
    }
}

TEST_CASE("freezing the encoder trains the head only") {
    encoder::EncoderConfig cfg = toy_config();
    SequenceClassifier base = fresh_classifier(cfg, 2, 80);
    std::vector<tokenize::TokenSequence> seqs{make_seq({5, 8}, cfg.T_max),
                                              make_seq({6, 9}, cfg.T_max)};
    std::vector<int> labels{0, 1};
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 2;
    tc.freeze_encoder = true;
    SequenceClassifier fitted = train_task(base, seqs, labels, tc);

    CHECK(checkpoint::encoder_to_json(fitted.enc) == checkpoint::encoder_to_json(base.enc));
    CHECK(std::memcmp(fitted.head_w.data(), base.head_w.data(),
                      sizeof(double) * base.head_w.size()) != 0);

    SUBCASE("unknown labels are rejected") {
        CHECK_THROWS_AS(train_task(base, seqs, {0, 2}, tc), DomainError);
    }
}

TEST_CASE("long-document prediction combines chunk decisions") {
    encoder::EncoderConfig cfg = toy_config();
    SequenceClassifier base = fresh_classifier(cfg, 2, 90);

    // Binary task: class 1 iff token 5 appears.
    std::vector<tokenize::TokenSequence> seqs;
    std::vector<int> labels;
    SplitMix64 rng(91);
    for (size_t i = 0; i < 24; ++i) {
        bool pos = i % 2 == 0;
        std::vector<int> content;
        for (size_t f = 0; f < 4; ++f)
            content.push_back(8 + static_cast<int>(rng.next_below(4)));
        if (pos) content[rng.next_below(4)] = 5;
        seqs.push_back(make_seq(content, cfg.T_max));
        labels.push_back(pos ? 1 : 0);
    }
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 8;
    tc.lr = 5e-3;
    tc.seed = 92;
    SequenceClassifier fitted = train_task(base, seqs, labels, tc);

    // Cue appears only after the first window.
    std::vector<int> doc;
    for (size_t i = 0; i < 14; ++i) doc.push_back(8 + static_cast<int>(i % 4));
    doc.push_back(5);
    doc.push_back(9);

    auto first_window = tokenize::chunk(doc, 10, 8)[0];
    Tensor head_probs = predict_probs(fitted, first_window);
    CHECK(head_probs.at(0, 1) < 0.5);  // truncation misses the cue

    LongPrediction orred = predict_long(fitted, doc, 10, 8, Combine::kOr);
    CHECK(orred.label == 1);
    CHECK(orred.chunk_probs.rows() >= 2);
    for (size_t c = 0; c < orred.chunk_probs.rows(); ++c)
        CHECK(std::abs(orred.chunk_probs.at(c, 0) + orred.chunk_probs.at(c, 1) - 1.0) <= 1e-12);

    SUBCASE("all-negative documents stay negative") {
        std::vector<int> clean;
        for (size_t i = 0; i < 16; ++i) clean.push_back(8 + static_cast<int>(i % 4));
        CHECK(predict_long(fitted, clean, 10, 8, Combine::kOr).label == 0);
    }
    SUBCASE("MEAN mode averages probabilities") {
        LongPrediction mean = predict_long(fitted, doc, 10, 8, Combine::kMean);
        double p1 = 0.0;
        for (size_t c = 0; c < mean.chunk_probs.rows(); ++c)
            p1 += mean.chunk_probs.at(c, 1);
        p1 /= static_cast<double>(mean.chunk_probs.rows());
        CHECK(mean.label == (p1 > 0.5 ? 1 : 0));
    }
    SUBCASE("OR needs a binary task") {
        SequenceClassifier three = fresh_classifier(cfg, 3, 93);
        CHECK_THROWS_AS(predict_long(three, doc, 10, 8, Combine::kOr), DomainError);
    }
    SUBCASE("window must fit the encoder") {
        CHECK_THROWS_AS(predict_long(fitted, doc, cfg.T_max + 2, 4, Combine::kOr),
                        DomainError);
    }
}

TEST_CASE("task training is deterministic for a fixed seed") {
    encoder::EncoderConfig cfg = toy_config();
    SequenceClassifier base = fresh_classifier(cfg, 2, 100);
    std::vector<tokenize::TokenSequence> seqs{make_seq({5, 8}, cfg.T_max),
                                              make_seq({6, 9}, cfg.T_max),
                                              make_seq({5, 10}, cfg.T_max),
                                              make_seq({6, 11}, cfg.T_max)};
    std::vector<int> labels{0, 1, 0, 1};
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 2;
    SequenceClassifier a = train_task(base, seqs, labels, tc);
    SequenceClassifier b = train_task(base, seqs, labels, tc);
    CHECK(checkpoint::classifier_to_json(a) == checkpoint::classifier_to_json(b));

    tc.seed = 101;
    SequenceClassifier c = train_task(base, seqs, labels, tc);
    CHECK(checkpoint::classifier_to_json(c) != checkpoint::classifier_to_json(a));
}
