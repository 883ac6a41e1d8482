#pragma once

// JSON forms of network specs, checkpoints and ELM fits. Vectors of doubles
// are stored as base64 of little-endian IEEE-754 bytes, so a save/load
// round trip is bit exact.

#include "reglearn/nnet/elm.hpp"
#include "reglearn/nnet/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

namespace reglearn {

using Json = nlohmann::json;

// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context);

std::string encode_f64(std::span<const double> values);
Vector decode_f64(std::string_view text);

Json to_json(const LayerSpec& l);
LayerSpec layer_spec_from_json(const Json& j);
Json to_json(const NetworkSpec& s);
NetworkSpec network_spec_from_json(const Json& j);

Json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Json to_json(const ElmModel& m);
ElmModel elm_from_json(const Json& j);

// Reads a whole JSON document; failures name the file.
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace reglearn
