#include "negguide/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "negguide/errors.hpp"

namespace negguide {

std::string format_real(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json guidance_to_json(const GuidanceConfig& c) {
  return {{"strategy", std::string(to_string(c.strategy))},
          {"s", c.s},
          {"s_n", c.negative_scale()},
          {"K", c.k},
          {"normalize", c.normalize},
          {"window_fraction", c.window_fraction},
          {"sampler", std::string(to_string(c.sampler))},
          {"seed", c.seed},
          {"k_schedule_offset", c.k_schedule_offset}};
}

GuidanceConfig guidance_from_json(const nlohmann::json& doc, GuidanceConfig base) {
  if (!doc.is_object()) throw ConfigError("guidance: expected an object");
  auto number = [&](const char* key) {
    if (!doc[key].is_number()) throw ConfigError(std::string("guidance.") + key + ": expected a number");
    return doc[key].get<double>();
  };
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "strategy") {
        base.strategy = parse_strategy(value.get<std::string>());
      } else if (key == "s") {
        base.s = number("s");
      } else if (key == "s_n") {
        if (value.is_null()) base.s_n.reset();
        else base.s_n = number("s_n");
      } else if (key == "K") {
        if (!value.is_number_integer()) throw ConfigError("guidance.K: expected an integer");
        base.k = value.get<int>();
      } else if (key == "normalize") {
        if (!value.is_boolean()) throw ConfigError("guidance.normalize: expected a boolean");
        base.normalize = value.get<bool>();
      } else if (key == "window_fraction") {
        base.window_fraction = number("window_fraction");
      } else if (key == "sampler") {
        base.sampler = parse_sampler(value.get<std::string>());
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) throw ConfigError("guidance.seed: expected an unsigned integer");
        base.seed = value.get<std::uint64_t>();
      } else if (key == "k_schedule_offset") {
        base.k_schedule_offset = number("k_schedule_offset");
      } else if (key == "label") {
        // display-only, handled by callers
      } else {
        throw ConfigError("guidance." + key + ": unknown field");
      }
    }
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("guidance: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("guidance: ") + e.what());
  }
  try {
    base.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("guidance: ") + e.what());
  }
  return base;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void put_vec(std::ostream& out, const Vec& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << format_real(v[i]);
  }
  out << ']';
}

void put_field(std::ostream& out, const char* key, const Vec& v) {
  out << ",\"" << key << "\":";
  put_vec(out, v);
}

Vec vec_from(const nlohmann::json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace

void write_trace(std::ostream& out, const ChainTrace& trace, const ConceptWorld& world,
                 const std::string& config_hash) {
  nlohmann::json header = {{"type", "header"},
                           {"engine", std::string("negguide ") + kEngineVersion},
                           {"config_hash", config_hash},
                           {"condition", world.label(trace.condition)},
                           {"steps", trace.records.size()},
                           {"total_denoiser_calls", trace.total_denoiser_calls},
                           {"config", guidance_to_json(trace.config)}};
  out << header.dump() << '\n';
  for (const StepRecord& r : trace.records) {
    out << "{\"t\":" << r.t;
    put_field(out, "z_before", r.z_before);
    put_field(out, "z_after", r.z_after);
    put_field(out, "eps_cond", r.eps_cond);
    if (r.eps_uncond) put_field(out, "eps_uncond", *r.eps_uncond);
    if (r.eps_neg) put_field(out, "eps_neg", *r.eps_neg);
    put_field(out, "eps_combined", r.eps_combined);
    out << ",\"k_t\":" << r.k_t;
    if (r.negative_concept) {
      out << ",\"negative_concept\":" << nlohmann::json(world.concept_at(*r.negative_concept).id).dump();
    }
    out << ",\"denoiser_calls_so_far\":" << r.denoiser_calls_so_far << "}\n";
  }
}

ParsedTrace read_trace(std::istream& in, const ConceptWorld& world) {
  ParsedTrace parsed;
  std::string line;
  if (!std::getline(in, line)) throw IoError("trace: empty stream");
  try {
    parsed.header = nlohmann::json::parse(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      StepRecord r;
      r.t = j.at("t").get<int>();
      r.z_before = vec_from(j.at("z_before"));
      r.z_after = vec_from(j.at("z_after"));
      r.eps_cond = vec_from(j.at("eps_cond"));
      if (j.contains("eps_uncond")) r.eps_uncond = vec_from(j["eps_uncond"]);
      if (j.contains("eps_neg")) r.eps_neg = vec_from(j["eps_neg"]);
      r.eps_combined = vec_from(j.at("eps_combined"));
      r.k_t = j.at("k_t").get<int>();
      if (j.contains("negative_concept")) {
        r.negative_concept = world.index_of(j["negative_concept"].get<std::string>());
      }
      r.denoiser_calls_so_far = j.at("denoiser_calls_so_far").get<std::uint64_t>();
      parsed.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trace: ") + e.what());
  }
  return parsed;
}

}  // namespace negguide
