#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "hmmr/nets/nets.hpp"
#include "hmmr/train/trainer.hpp"

// Flat key=value configuration text. '#' starts a comment; blank lines are
// ignored; later keys override earlier ones.

namespace hmmr::train {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);

// Sets one field; returns false for keys that belong to neither config.
// Malformed values throw ConfigError.
bool apply_key(TrainConfig& t, nets::EncoderConfig& e, const std::string& key, const std::string& value);

// Applies every entry; unknown keys throw ConfigError.
void apply_all(TrainConfig& t, nets::EncoderConfig& e, const KeyValues& kv);

// All fields, round-trip exact.
std::string to_text(const TrainConfig& t, const nets::EncoderConfig& e);

}  // namespace hmmr::train
