#include "hmmr/train/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace hmmr::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + want);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "a number");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad(key, v, "a boolean (true/false/1/0)");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<int> parse_steps(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split_list(v)) {
    int x = 0;
    const char* b = item.data();
    if (!item.empty() && item[0] == '+') ++b;
    const auto r = std::from_chars(b, item.data() + item.size(), x);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size()) bad(key, v, "a comma-separated list of integers");
    out.push_back(x);
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

bool apply_key(TrainConfig& t, nets::EncoderConfig& e, const std::string& key, const std::string& value) {
  using Setter = std::function<void(const std::string&)>;
  auto sz = [&](std::size_t& f) { return Setter([&f, &key](const std::string& v) { f = parse_u64(key, v); }); };
  auto dbl = [&](double& f) { return Setter([&f, &key](const std::string& v) { f = parse_double(key, v); }); };
  auto bln = [&](bool& f) { return Setter([&f, &key](const std::string& v) { f = parse_bool(key, v); }); };
  const std::map<std::string, Setter> table{
      {"seq_len", sz(t.seq_len)},
      {"batch_size", sz(t.batch_size)},
      {"steps", sz(t.steps)},
      {"lr", dbl(t.lr)},
      {"disc_lr", dbl(t.disc_lr)},
      {"adam_beta1", dbl(t.adam_beta1)},
      {"adam_beta2", dbl(t.adam_beta2)},
      {"adam_eps", dbl(t.adam_eps)},
      {"seed", [&](const std::string& v) { t.seed = parse_u64(key, v); }},
      {"w_2d", dbl(t.weights.w_2d)},
      {"w_3d", dbl(t.weights.w_3d)},
      {"w_adv", dbl(t.weights.w_adv)},
      {"w_beta", dbl(t.weights.w_beta)},
      {"w_const", dbl(t.weights.w_const)},
      {"w_hal", dbl(t.weights.w_hal)},
      {"w_delta", dbl(t.weights.w_delta)},
      {"jitter_scale", dbl(t.jitter_scale)},
      {"jitter_translation", dbl(t.jitter_translation)},
      {"tier_ratio",
       [&](const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) bad(key, v, "three comma-separated weights");
         for (std::size_t i = 0; i < 3; ++i) t.tier_ratio[i] = parse_double(key, items[i]);
       }},
      {"delta_centers", sz(t.delta_centers)},
      {"hallucinator", bln(t.hallucinator)},
      {"hal_stop_gradient", bln(t.hal_stop_gradient)},
      {"supervise_cam", bln(t.supervise_cam)},
      {"delta_camera",
       [&](const std::string& v) {
         if (v == "full") t.delta_camera = camera::CameraGradient::Full;
         else if (v == "fixed") t.delta_camera = camera::CameraGradient::Fixed;
         else bad(key, v, "'full' or 'fixed'");
       }},
      {"feature_dim", sz(e.feature_dim)},
      {"n_blocks", sz(e.n_blocks)},
      {"kernel", sz(e.kernel)},
      {"groups", sz(e.groups)},
      {"ief_iters", sz(e.ief_iters)},
      {"ief_hidden", sz(e.ief_hidden)},
      {"dropout", dbl(e.dropout_rate)},
      {"delta_steps", [&](const std::string& v) { e.delta_steps = parse_steps(key, v); }},
      {"hal_hidden", sz(e.hal_hidden)},
      {"disc_hidden", sz(e.disc_hidden)},
      {"out_init_scale", dbl(e.out_init_scale)},
  };
  const auto it = table.find(key);
  if (it == table.end()) return false;
  it->second(value);
  return true;
}

void apply_all(TrainConfig& t, nets::EncoderConfig& e, const KeyValues& kv) {
  for (const auto& [k, v] : kv)
    if (!apply_key(t, e, k, v)) throw ConfigError("unknown config key '" + k + "'");
}

std::string to_text(const TrainConfig& t, const nets::EncoderConfig& e) {
  std::ostringstream o;
  auto line = [&](const char* k, const std::string& v) { o << k << " = " << v << "\n"; };
  line("seq_len", std::to_string(t.seq_len));
  line("batch_size", std::to_string(t.batch_size));
  line("steps", std::to_string(t.steps));
  line("lr", fmt(t.lr));
  line("disc_lr", fmt(t.disc_lr));
  line("adam_beta1", fmt(t.adam_beta1));
  line("adam_beta2", fmt(t.adam_beta2));
  line("adam_eps", fmt(t.adam_eps));
  line("seed", std::to_string(t.seed));
  line("w_2d", fmt(t.weights.w_2d));
  line("w_3d", fmt(t.weights.w_3d));
  line("w_adv", fmt(t.weights.w_adv));
  line("w_beta", fmt(t.weights.w_beta));
  line("w_const", fmt(t.weights.w_const));
  line("w_hal", fmt(t.weights.w_hal));
  line("w_delta", fmt(t.weights.w_delta));
  line("jitter_scale", fmt(t.jitter_scale));
  line("jitter_translation", fmt(t.jitter_translation));
  line("tier_ratio", fmt(t.tier_ratio[0]) + "," + fmt(t.tier_ratio[1]) + "," + fmt(t.tier_ratio[2]));
  line("delta_centers", std::to_string(t.delta_centers));
  line("hallucinator", t.hallucinator ? "true" : "false");
  line("hal_stop_gradient", t.hal_stop_gradient ? "true" : "false");
  line("supervise_cam", t.supervise_cam ? "true" : "false");
  line("delta_camera", t.delta_camera == camera::CameraGradient::Full ? "full" : "fixed");
  line("feature_dim", std::to_string(e.feature_dim));
  line("n_blocks", std::to_string(e.n_blocks));
  line("kernel", std::to_string(e.kernel));
  line("groups", std::to_string(e.groups));
  line("ief_iters", std::to_string(e.ief_iters));
  line("ief_hidden", std::to_string(e.ief_hidden));
  line("dropout", fmt(e.dropout_rate));
  std::string steps;
  for (std::size_t i = 0; i < e.delta_steps.size(); ++i) steps += (i ? "," : "") + std::to_string(e.delta_steps[i]);
  line("delta_steps", steps);
  line("hal_hidden", std::to_string(e.hal_hidden));
  line("disc_hidden", std::to_string(e.disc_hidden));
  line("out_init_scale", fmt(e.out_init_scale));
  return o.str();
}

}  // namespace hmmr::train
