#include "dfusion/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dfusion/errors.hpp"

namespace dfusion {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: invalid value '" + value + "' for " + key);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
  if (used != value.size()) bad_value(key, value);
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) bad_value(key, value);
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ConfigValues parse_config_text(const std::string& text) {
  ConfigValues values;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    values[section.empty() ? key : section + "." + key] = trim(s.substr(eq + 1));
  }
  return values;
}

RunConfig::RunConfig() {
  // Desk-scale fusion defaults (200 steps on 64 pairs); full scale is crop 160, batch 24, 300 epochs, lr 1e-4.
  fusion.crop = 32;
  fusion.batch_size = 16;
  fusion.epochs = 50;
  fusion.learning_rate = 2e-3;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "schedule.steps") {
    schedule.steps = static_cast<int>(to_u64(key, value));
  } else if (key == "schedule.beta_start") {
    schedule.beta_start = to_double(key, value);
  } else if (key == "schedule.beta_end") {
    schedule.beta_end = to_double(key, value);
  } else if (key == "denoiser.base_width") {
    denoiser.base_width = to_u64(key, value);
  } else if (key == "denoiser.embed_dim") {
    denoiser.embed_dim = to_u64(key, value);
  } else if (key == "denoiser.seed") {
    denoiser_seed = to_u64(key, value);
  } else if (key == "diffusion.steps") {
    diffusion.steps = to_u64(key, value);
  } else if (key == "diffusion.batch_size") {
    diffusion.batch_size = to_u64(key, value);
  } else if (key == "diffusion.learning_rate") {
    diffusion.learning_rate = to_double(key, value);
  } else if (key == "diffusion.norm") {
    if (value == "l2") {
      diffusion.norm = ResidualNorm::kL2;
    } else if (value == "squared") {
      diffusion.norm = ResidualNorm::kSquaredL2;
    } else {
      bad_value(key, value);
    }
  } else if (key == "diffusion.seed") {
    diffusion_seed = to_u64(key, value);
  } else if (key == "fusion.timesteps") {
    std::istringstream in(value);
    std::string part;
    std::size_t k = 0;
    while (std::getline(in, part, ',')) {
      if (k == kFeatureTimesteps) bad_value(key, value);
      fusion.model.timesteps[k++] = static_cast<int>(to_u64(key, trim(part)));
    }
    if (k != kFeatureTimesteps) bad_value(key, value);
  } else if (key == "fusion.feature_width") {
    fusion.model.feature_width = to_u64(key, value);
  } else if (key == "fusion.hidden_width") {
    fusion.model.hidden_width = to_u64(key, value);
  } else if (key == "fusion.use_diffusion_features") {
    fusion.model.use_diffusion_features = to_bool(key, value);
  } else if (key == "fusion.noise_seed") {
    fusion.model.noise_seed = to_u64(key, value);
  } else if (key == "fusion.crop") {
    fusion.crop = to_u64(key, value);
  } else if (key == "fusion.batch_size") {
    fusion.batch_size = to_u64(key, value);
  } else if (key == "fusion.epochs") {
    fusion.epochs = to_u64(key, value);
  } else if (key == "fusion.steps_per_epoch") {
    fusion.steps_per_epoch = to_u64(key, value);
  } else if (key == "fusion.learning_rate") {
    fusion.learning_rate = to_double(key, value);
  } else if (key == "fusion.gradient_form") {
    if (value == "magnitude") {
      fusion.gradient_form = GradientLossForm::kMagnitude;
    } else if (value == "literal") {
      fusion.gradient_form = GradientLossForm::kLiteral;
    } else {
      bad_value(key, value);
    }
  } else if (key == "fusion.seed") {
    fusion_seed = to_u64(key, value);
  } else if (key == "sample.seed") {
    sample_seed = to_u64(key, value);
  } else if (key == "run.output_dir") {
    output_dir = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void RunConfig::apply(const ConfigValues& values) {
  for (const auto& [key, value] : values) set(key, value);
}

NoiseSchedule RunConfig::make_schedule() const {
  return make_linear_schedule(schedule.steps, schedule.beta_start, schedule.beta_end);
}

void RunConfig::validate() const {
  const NoiseSchedule s = make_schedule();
  denoiser.validate();
  diffusion.validate();
  fusion.validate(s);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig config;
  try {
    config.apply(parse_config_text(text.str()));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return config;
}

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[schedule]\n"
     << "steps = " << c.schedule.steps << '\n'
     << "beta_start = " << num(c.schedule.beta_start) << '\n'
     << "beta_end = " << num(c.schedule.beta_end) << "\n\n";
  os << "[denoiser]\n"
     << "base_width = " << c.denoiser.base_width << '\n'
     << "embed_dim = " << c.denoiser.embed_dim << '\n'
     << "seed = " << c.denoiser_seed << "\n\n";
  os << "[diffusion]\n"
     << "steps = " << c.diffusion.steps << '\n'
     << "batch_size = " << c.diffusion.batch_size << '\n'
     << "learning_rate = " << num(c.diffusion.learning_rate) << '\n'
     << "norm = " << (c.diffusion.norm == ResidualNorm::kL2 ? "l2" : "squared") << '\n'
     << "seed = " << c.diffusion_seed << "\n\n";
  const auto& t = c.fusion.model.timesteps;
  os << "[fusion]\n"
     << "timesteps = " << t[0] << ',' << t[1] << ',' << t[2] << '\n'
     << "feature_width = " << c.fusion.model.feature_width << '\n'
     << "hidden_width = " << c.fusion.model.hidden_width << '\n'
     << "use_diffusion_features = " << (c.fusion.model.use_diffusion_features ? "true" : "false") << '\n'
     << "noise_seed = " << c.fusion.model.noise_seed << '\n'
     << "crop = " << c.fusion.crop << '\n'
     << "batch_size = " << c.fusion.batch_size << '\n'
     << "epochs = " << c.fusion.epochs << '\n'
     << "steps_per_epoch = " << c.fusion.steps_per_epoch << '\n'
     << "learning_rate = " << num(c.fusion.learning_rate) << '\n'
     << "gradient_form = " << (c.fusion.gradient_form == GradientLossForm::kMagnitude ? "magnitude" : "literal") << '\n'
     << "seed = " << c.fusion_seed << "\n\n";
  os << "[sample]\n"
     << "seed = " << c.sample_seed << "\n\n";
  os << "[run]\n"
     << "output_dir = " << c.output_dir.generic_string() << '\n';
  return os.str();
}

}  // namespace dfusion
