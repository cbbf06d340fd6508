#include "textclass/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "textclass/errors.hpp"

namespace textclass::checkpoint {

using nlohmann::json;

namespace {

// ---- writer ----

void append_double(std::string& out, double v) {
    if (!std::isfinite(v)) throw NumericError("checkpoint: refusing to write non-finite value");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
    // Keep integral values (notably -0) in floating-point form so parsers
    // do not route them through an integer type and drop the sign bit.
    if (out.find_first_of(".eE", out.size() - std::strlen(buf)) == std::string::npos)
        out += ".0";
}

void append_string(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

void append_tensor(std::string& out, const Tensor& t) {
    out += '[';
    for (size_t i = 0; i < t.rows(); ++i) {
        if (i) out += ',';
        out += '[';
        for (size_t j = 0; j < t.cols(); ++j) {
            if (j) out += ',';
            append_double(out, t.at(i, j));
        }
        out += ']';
    }
    out += ']';
}

void append_config(std::string& out, const encoder::EncoderConfig& c) {
    out += "{\"v\":" + std::to_string(c.V) + ",\"e\":" + std::to_string(c.E) +
           ",\"h\":" + std::to_string(c.H) + ",\"d_k\":" + std::to_string(c.d_K) +
           ",\"l\":" + std::to_string(c.L) + ",\"t_max\":" + std::to_string(c.T_max) +
           ",\"f\":" + std::to_string(c.F) +
           ",\"positional\":" + (c.positional ? "true" : "false") + "}";
}

void append_encoder_body(std::string& out, const encoder::EncoderModel& m) {
    out += "\"config\":";
    append_config(out, m.config);
    out += ",\"w_emb\":";
    append_tensor(out, m.W_emb);
    out += ",\"layers\":[";
    for (size_t l = 0; l < m.layers.size(); ++l) {
        const encoder::LayerParams& p = m.layers[l];
        if (l) out += ',';
        out += '{';
        auto head_list = [&](const char* key, const std::vector<Tensor>& ws) {
            out += '"';
            out += key;
            out += "\":[";
            for (size_t h = 0; h < ws.size(); ++h) {
                if (h) out += ',';
                append_tensor(out, ws[h]);
            }
            out += ']';
        };
        head_list("wq", p.Wq);
        out += ',';
        head_list("wk", p.Wk);
        out += ',';
        head_list("wv", p.Wv);
        auto named = [&](const char* key, const Tensor& t) {
            out += ",\"";
            out += key;
            out += "\":";
            append_tensor(out, t);
        };
        named("wo", p.Wo);
        named("w1", p.W1);
        named("b1", p.b1);
        named("w2", p.W2);
        named("b2", p.b2);
        named("ln1_gamma", p.ln1_gamma);
        named("ln1_beta", p.ln1_beta);
        named("ln2_gamma", p.ln2_gamma);
        named("ln2_beta", p.ln2_beta);
        out += '}';
    }
    out += ']';
}

void append_classes(std::string& out, const std::vector<std::string>& classes) {
    out += '[';
    for (size_t i = 0; i < classes.size(); ++i) {
        if (i) out += ',';
        append_string(out, classes[i]);
    }
    out += ']';
}

// ---- reader ----

json parse_or_throw(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("checkpoint: file is not valid JSON");
    return j;
}

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw SchemaError(std::string("checkpoint: missing field \"") + key + "\"");
    return *it;
}

Tensor read_tensor(const json& j, const char* key) {
    const json& arr = require(j, key);
    if (!arr.is_array() || arr.empty())
        throw SchemaError(std::string("checkpoint: \"") + key + "\" must be a non-empty array");
    size_t rows = arr.size();
    if (!arr[0].is_array())
        throw SchemaError(std::string("checkpoint: \"") + key + "\" must be a 2-D array");
    size_t cols = arr[0].size();
    Tensor t(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        if (!arr[i].is_array() || arr[i].size() != cols)
            throw SchemaError(std::string("checkpoint: ragged rows in \"") + key + "\"");
        for (size_t j2 = 0; j2 < cols; ++j2) {
            if (!arr[i][j2].is_number())
                throw SchemaError(std::string("checkpoint: non-numeric entry in \"") + key +
                                  "\"");
            t.at(i, j2) = arr[i][j2].get<double>();
        }
    }
    return t;
}

std::vector<Tensor> read_tensor_list(const json& j, const char* key) {
    const json& arr = require(j, key);
    if (!arr.is_array())
        throw SchemaError(std::string("checkpoint: \"") + key + "\" must be an array");
    std::vector<Tensor> out;
    for (size_t h = 0; h < arr.size(); ++h) {
        json wrap;
        wrap["t"] = arr[h];
        out.push_back(read_tensor(wrap, "t"));
    }
    return out;
}

void check_shape(const Tensor& t, size_t rows, size_t cols, const char* what) {
    if (t.rows() != rows || t.cols() != cols)
        throw SchemaError(std::string("checkpoint: ") + what + " has shape " + t.shape_str() +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

encoder::EncoderModel read_encoder_body(const json& j) {
    const json& cj = require(j, "config");
    encoder::EncoderConfig cfg;
    cfg.V = require(cj, "v").get<size_t>();
    cfg.E = require(cj, "e").get<size_t>();
    cfg.H = require(cj, "h").get<size_t>();
    cfg.d_K = require(cj, "d_k").get<size_t>();
    cfg.L = require(cj, "l").get<size_t>();
    cfg.T_max = require(cj, "t_max").get<size_t>();
    cfg.F = require(cj, "f").get<size_t>();
    cfg.positional = require(cj, "positional").get<bool>();
    cfg.validate();

    encoder::EncoderModel m;
    m.config = cfg;
    m.W_emb = read_tensor(j, "w_emb");
    check_shape(m.W_emb, cfg.V, cfg.E, "w_emb");

    const json& layers = require(j, "layers");
    if (!layers.is_array() || layers.size() != cfg.L)
        throw SchemaError("checkpoint: expected " + std::to_string(cfg.L) + " layers");
    for (const json& lj : layers) {
        encoder::LayerParams p;
        p.Wq = read_tensor_list(lj, "wq");
        p.Wk = read_tensor_list(lj, "wk");
        p.Wv = read_tensor_list(lj, "wv");
        if (p.Wq.size() != cfg.H || p.Wk.size() != cfg.H || p.Wv.size() != cfg.H)
            throw SchemaError("checkpoint: expected " + std::to_string(cfg.H) +
                              " heads per projection");
        for (size_t h = 0; h < cfg.H; ++h) {
            check_shape(p.Wq[h], cfg.E, cfg.d_K, "wq head");
            check_shape(p.Wk[h], cfg.E, cfg.d_K, "wk head");
            check_shape(p.Wv[h], cfg.E, cfg.d_K, "wv head");
        }
        p.Wo = read_tensor(lj, "wo");
        check_shape(p.Wo, cfg.H * cfg.d_K, cfg.E, "wo");
        p.W1 = read_tensor(lj, "w1");
        check_shape(p.W1, cfg.E, cfg.F, "w1");
        p.b1 = read_tensor(lj, "b1");
        check_shape(p.b1, 1, cfg.F, "b1");
        p.W2 = read_tensor(lj, "w2");
        check_shape(p.W2, cfg.F, cfg.E, "w2");
        p.b2 = read_tensor(lj, "b2");
        check_shape(p.b2, 1, cfg.E, "b2");
        p.ln1_gamma = read_tensor(lj, "ln1_gamma");
        p.ln1_beta = read_tensor(lj, "ln1_beta");
        p.ln2_gamma = read_tensor(lj, "ln2_gamma");
        p.ln2_beta = read_tensor(lj, "ln2_beta");
        check_shape(p.ln1_gamma, 1, cfg.E, "ln1_gamma");
        check_shape(p.ln1_beta, 1, cfg.E, "ln1_beta");
        check_shape(p.ln2_gamma, 1, cfg.E, "ln2_gamma");
        check_shape(p.ln2_beta, 1, cfg.E, "ln2_beta");
        m.layers.push_back(std::move(p));
    }
    return m;
}

std::vector<std::string> read_classes(const json& j) {
    const json& arr = require(j, "classes");
    if (!arr.is_array()) throw SchemaError("checkpoint: \"classes\" must be an array");
    std::vector<std::string> out;
    for (const json& v : arr) {
        if (!v.is_string()) throw SchemaError("checkpoint: class names must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

void expect_kind(const json& j, const std::string& kind) {
    if (require(j, "kind").get<std::string>() != kind)
        throw SchemaError("checkpoint: expected a \"" + kind + "\" file");
}

}  // namespace

std::string encoder_to_json(const encoder::EncoderModel& m) {
    std::string out = "{\"kind\":\"encoder\",";
    append_encoder_body(out, m);
    out += "}\n";
    return out;
}

encoder::EncoderModel encoder_from_json(const std::string& text) {
    json j = parse_or_throw(text);
    expect_kind(j, "encoder");
    return read_encoder_body(j);
}

std::string classifier_to_json(const train::SequenceClassifier& c) {
    std::string out = "{\"kind\":\"classifier\",";
    append_encoder_body(out, c.enc);
    out += ",\"pooling\":";
    append_string(out, encoder::pooling_name(c.pooling));
    out += ",\"exclude_specials\":";
    out += c.exclude_specials ? "true" : "false";
    out += ",\"classes\":";
    append_classes(out, c.classes);
    out += ",\"head_w\":";
    append_tensor(out, c.head_w);
    out += ",\"head_b\":";
    append_tensor(out, c.head_b);
    out += "}\n";
    return out;
}

train::SequenceClassifier classifier_from_json(const std::string& text) {
    json j = parse_or_throw(text);
    expect_kind(j, "classifier");
    train::SequenceClassifier c;
    c.enc = read_encoder_body(j);
    c.pooling = encoder::parse_pooling(require(j, "pooling").get<std::string>());
    c.exclude_specials = require(j, "exclude_specials").get<bool>();
    c.classes = read_classes(j);
    c.head_w = read_tensor(j, "head_w");
    c.head_b = read_tensor(j, "head_b");
    check_shape(c.head_w, c.enc.config.E, c.classes.size(), "head_w");
    check_shape(c.head_b, 1, c.classes.size(), "head_b");
    return c;
}

std::string logreg_to_json(const train::LogRegModel& m) {
    std::string out = "{\"kind\":\"logreg\",\"l2_lambda\":";
    append_double(out, m.l2_lambda);
    out += ",\"classes\":";
    append_classes(out, m.classes);
    out += ",\"weights\":";
    append_tensor(out, m.weights);
    out += ",\"bias\":";
    append_tensor(out, m.bias);
    out += "}\n";
    return out;
}

train::LogRegModel logreg_from_json(const std::string& text) {
    json j = parse_or_throw(text);
    expect_kind(j, "logreg");
    train::LogRegModel m;
    m.l2_lambda = require(j, "l2_lambda").get<double>();
    m.classes = read_classes(j);
    m.weights = read_tensor(j, "weights");
    m.bias = read_tensor(j, "bias");
    if (m.bias.rows() != 1 || m.bias.cols() != m.weights.cols())
        throw SchemaError("checkpoint: bias shape " + m.bias.shape_str() +
                          " does not match weights " + m.weights.shape_str());
    if (m.classes.size() != m.weights.cols())
        throw SchemaError("checkpoint: " + std::to_string(m.classes.size()) +
                          " class names for " + std::to_string(m.weights.cols()) + " columns");
    return m;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IoError("write to " + path + " failed");
}

void save_encoder(const encoder::EncoderModel& m, const std::string& path) {
    write_text_file(path, encoder_to_json(m));
}

encoder::EncoderModel load_encoder(const std::string& path) {
    return encoder_from_json(read_text_file(path));
}

void save_classifier(const train::SequenceClassifier& c, const std::string& path) {
    write_text_file(path, classifier_to_json(c));
}

train::SequenceClassifier load_classifier(const std::string& path) {
    return classifier_from_json(read_text_file(path));
}

void save_logreg(const train::LogRegModel& m, const std::string& path) {
    write_text_file(path, logreg_to_json(m));
}

train::LogRegModel load_logreg(const std::string& path) {
    return logreg_from_json(read_text_file(path));
}

}  // namespace textclass::checkpoint
