#pragma once

#include <string>

#include "textclass/encoder.hpp"
#include "textclass/train.hpp"

namespace textclass::checkpoint {

// Model serialization. Files are JSON with a fixed key order and doubles
// printed at 17 significant digits, so saving the same model twice yields
// byte-identical files and a load/save round trip preserves every
// parameter bit-for-bit. Non-finite parameters are refused (NumericError).

std::string encoder_to_json(const encoder::EncoderModel& model);
encoder::EncoderModel encoder_from_json(const std::string& text);

std::string classifier_to_json(const train::SequenceClassifier& c);
train::SequenceClassifier classifier_from_json(const std::string& text);

std::string logreg_to_json(const train::LogRegModel& m);
train::LogRegModel logreg_from_json(const std::string& text);

void save_encoder(const encoder::EncoderModel& model, const std::string& path);
encoder::EncoderModel load_encoder(const std::string& path);

void save_classifier(const train::SequenceClassifier& c, const std::string& path);
train::SequenceClassifier load_classifier(const std::string& path);

void save_logreg(const train::LogRegModel& m, const std::string& path);
train::LogRegModel load_logreg(const std::string& path);

std::string read_text_file(const std::string& path);   // IoError on failure
void write_text_file(const std::string& path, const std::string& content);

}  // namespace textclass::checkpoint
