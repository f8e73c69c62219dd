#include "ecoforge/archive.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ecoforge/category_rules_data.hpp"
#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- JSON conversions. nlohmann::json keeps keys sorted and prints doubles
// --- shortest-round-trip, which is what makes manifests byte-stable.

json to_json(const EnergyReport& e) {
  return {{"net_energy_j", e.net_energy_j},
          {"mean_net_power_w", e.mean_net_power_w},
          {"runtime_s", e.runtime_s},
          {"idle_power_w", e.idle_power_w}};
}

EnergyReport energy_from_json(const json& j) {
  EnergyReport e;
  e.net_energy_j = j.at("net_energy_j").get<double>();
  e.mean_net_power_w = j.at("mean_net_power_w").get<double>();
  e.runtime_s = j.at("runtime_s").get<double>();
  e.idle_power_w = j.at("idle_power_w").get<double>();
  return e;
}

// Profile metadata lives in the manifest; the samples live in a side file.
json profile_meta_to_json(const PowerProfile& p) {
  return {{"idle_pre_w", p.idle_pre_w},
          {"idle_post_w", p.idle_post_w},
          {"exec_start_t", p.exec_start_t},
          {"exec_end_t", p.exec_end_t},
          {"sample_interval_s", p.sample_interval_s},
          {"sample_count", p.samples.size()}};
}

PowerProfile profile_from_meta(const json& j) {
  PowerProfile p;
  p.idle_pre_w = j.at("idle_pre_w").get<double>();
  p.idle_post_w = j.at("idle_post_w").get<double>();
  p.exec_start_t = j.at("exec_start_t").get<double>();
  p.exec_end_t = j.at("exec_end_t").get<double>();
  p.sample_interval_s = j.at("sample_interval_s").get<double>();
  return p;
}

json verdict_to_json(const Verdict& v) {
  return {{"decision", std::string(to_string(v.decision))}, {"rationale", v.rationale}};
}

Verdict verdict_from_json(const json& j) {
  return {verdict_from_string(j.at("decision").get<std::string>()),
          j.at("rationale").get<std::string>()};
}

json candidate_to_json(const CandidateRecord& c, int index) {
  json j;
  j["record"] = "candidate";
  j["index"] = index;
  j["origin"] = std::string(to_string(c.code.origin));
  j["dialect"] = std::string(to_string(c.code.dialect));
  j["iteration_index"] = c.code.iteration_index;
  j["temperature_used"] =
      c.code.temperature_used ? json(*c.code.temperature_used) : json(nullptr);
  j["lines_of_code"] = lines_of_code(c.code.source_text);
  j["source_file"] = fmt::format("candidate-{}.src", index);
  j["compile_ok"] = c.compile_ok;
  j["exec_ok"] = c.exec_ok;
  j["self_correction_count"] = c.self_correction_count;
  j["energy"] = c.energy ? to_json(*c.energy) : json(nullptr);
  j["verdict"] = c.verdict ? verdict_to_json(*c.verdict) : json(nullptr);
  j["profile"] = c.profile ? profile_meta_to_json(*c.profile) : json(nullptr);
  j["profile_file"] = c.profile ? json(fmt::format("profile-{}.txt", index)) : json(nullptr);
  return j;
}

json exchange_to_json(const LlmExchange& x) {
  return {{"label", x.label},
          {"system_prompt", x.system_prompt},
          {"user_prompt", x.user_prompt},
          {"temperature", x.temperature ? json(*x.temperature) : json(nullptr)},
          {"reply", x.reply}};
}

LlmExchange exchange_from_json(const json& j) {
  LlmExchange x;
  x.label = j.at("label").get<std::string>();
  x.system_prompt = j.at("system_prompt").get<std::string>();
  x.user_prompt = j.at("user_prompt").get<std::string>();
  if (!j.at("temperature").is_null()) x.temperature = j.at("temperature").get<double>();
  x.reply = j.at("reply").get<std::string>();
  return x;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", p.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", p.string()));
  out << content;
  if (!out) throw IoError(fmt::format("write failed for {}", p.string()));
}

void check_path_component(const std::string& id, const char* what) {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
    throw IoError(fmt::format("{} '{}' is not usable as a path component", what, id));
}

}  // namespace

std::string serialize_trial_manifest(const TrialRecord& t) {
  json header;
  header["record"] = "trial";
  header["schema_version"] = 1;
  header["app_id"] = t.app_id;
  header["device_id"] = t.device_id;
  header["source_energy"] = to_json(t.source_energy);
  header["source_profile"] =
      t.source_profile ? profile_meta_to_json(*t.source_profile) : json(nullptr);
  header["source_profile_file"] = t.source_profile ? json("profile-source.txt") : json(nullptr);
  if (t.best) {
    header["best"] = {{"kind", std::string(to_string(t.best->kind))}, {"index", t.best->index}};
  } else {
    header["best"] = nullptr;
  }
  header["comparison_report"] = t.comparison_report ? json(*t.comparison_report) : json(nullptr);
  header["stop_reason"] = std::string(to_string(t.stop_reason));
  header["wall_time_s"] = t.wall_time_s;
  header["plans_issued"] = t.plans_issued;
  header["has_vanilla"] = t.vanilla.has_value();
  header["stage3_count"] = t.stage3_candidates.size();
  header["transcript_count"] = t.transcript.size();

  std::string out = header.dump() + "\n";
  int index = 0;
  if (t.vanilla) out += candidate_to_json(*t.vanilla, index++).dump() + "\n";
  for (const auto& c : t.stage3_candidates) out += candidate_to_json(c, index++).dump() + "\n";
  return out;
}

std::string serialize_transcript(const std::vector<LlmExchange>& transcript) {
  std::string out;
  for (const auto& x : transcript) out += exchange_to_json(x).dump() + "\n";
  return out;
}

std::string serialize_profile_samples(const PowerProfile& p) {
  std::string out;
  out.reserve(p.samples.size() * 24);
  for (const auto& s : p.samples) out += fmt::format("{} {}\n", s.t_s, s.power_w);
  return out;
}

std::vector<PowerSample> parse_profile_samples(const std::string& text) {
  std::vector<PowerSample> samples;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double t, w;
    if (ls >> t >> w) samples.push_back({t, w});
  }
  return samples;
}

fs::path persist_trial(const TrialRecord& record, const fs::path& root,
                       const PersistHooks* hooks) {
  validate(record);
  check_path_component(record.app_id, "app id");
  check_path_component(record.device_id, "device id");

  fs::path parent = root / record.app_id / record.device_id;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", parent.string(), ec.message()));

  int next = 0;
  for (const auto& entry : fs::directory_iterator(parent)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("trial-", 0) == 0) {
      try {
        next = std::max(next, std::stoi(name.substr(6)) + 1);
      } catch (const std::exception&) {
        // foreign directory name; ignore for numbering
      }
    }
  }
  fs::path final_dir = parent / fmt::format("trial-{:03}", next);
  fs::path tmp_dir = parent / fmt::format(".tmp-trial-{:03}", next);
  fs::remove_all(tmp_dir, ec);

  try {
    fs::create_directories(tmp_dir);
    write_file(tmp_dir / "manifest.jsonl", serialize_trial_manifest(record));
    write_file(tmp_dir / "transcript.txt", serialize_transcript(record.transcript));
    if (record.source_profile)
      write_file(tmp_dir / "profile-source.txt", serialize_profile_samples(*record.source_profile));
    int index = 0;
    auto write_candidate = [&](const CandidateRecord& c) {
      write_file(tmp_dir / fmt::format("candidate-{}.src", index), c.code.source_text);
      if (c.profile)
        write_file(tmp_dir / fmt::format("profile-{}.txt", index),
                   serialize_profile_samples(*c.profile));
      ++index;
    };
    if (record.vanilla) write_candidate(*record.vanilla);
    for (const auto& c : record.stage3_candidates) write_candidate(c);

    if (hooks && hooks->before_finalize) hooks->before_finalize();

    fs::rename(tmp_dir, final_dir);
  } catch (...) {
    fs::remove_all(tmp_dir, ec);
    throw;
  }
  return final_dir;
}

namespace {

TrialRecord load_one_trial(const fs::path& trial_dir) {
  std::string manifest = read_file(trial_dir / "manifest.jsonl");
  std::istringstream in(manifest);
  std::string line;
  if (!std::getline(in, line)) throw IoError("manifest is empty");

  json header = json::parse(line);
  if (header.at("record").get<std::string>() != "trial")
    throw IoError("first manifest record is not the trial header");

  TrialRecord t;
  t.app_id = header.at("app_id").get<std::string>();
  t.device_id = header.at("device_id").get<std::string>();
  t.source_energy = energy_from_json(header.at("source_energy"));
  if (!header.at("source_profile").is_null()) {
    PowerProfile p = profile_from_meta(header.at("source_profile"));
    p.samples = parse_profile_samples(
        read_file(trial_dir / header.at("source_profile_file").get<std::string>()));
    t.source_profile = std::move(p);
  }
  if (!header.at("best").is_null())
    t.best = BestRef{code_origin_from_string(header.at("best").at("kind").get<std::string>()),
                     header.at("best").at("index").get<int>()};
  if (!header.at("comparison_report").is_null())
    t.comparison_report = header.at("comparison_report").get<std::string>();
  t.stop_reason = stop_reason_from_string(header.at("stop_reason").get<std::string>());
  t.wall_time_s = header.at("wall_time_s").get<double>();
  t.plans_issued = header.at("plans_issued").get<int>();
  const bool has_vanilla = header.at("has_vanilla").get<bool>();
  const auto stage3_count = header.at("stage3_count").get<std::size_t>();

  std::vector<CandidateRecord> candidates;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.at("record").get<std::string>() != "candidate")
      throw IoError("unexpected manifest record type");
    CandidateRecord c;
    c.code.origin = code_origin_from_string(j.at("origin").get<std::string>());
    c.code.dialect = dialect_from_string(j.at("dialect").get<std::string>());
    c.code.iteration_index = j.at("iteration_index").get<int>();
    if (!j.at("temperature_used").is_null())
      c.code.temperature_used = j.at("temperature_used").get<double>();
    c.code.source_text = read_file(trial_dir / j.at("source_file").get<std::string>());
    c.compile_ok = j.at("compile_ok").get<bool>();
    c.exec_ok = j.at("exec_ok").get<bool>();
    c.self_correction_count = j.at("self_correction_count").get<int>();
    if (!j.at("energy").is_null()) c.energy = energy_from_json(j.at("energy"));
    if (!j.at("verdict").is_null()) c.verdict = verdict_from_json(j.at("verdict"));
    if (!j.at("profile").is_null()) {
      PowerProfile p = profile_from_meta(j.at("profile"));
      p.samples =
          parse_profile_samples(read_file(trial_dir / j.at("profile_file").get<std::string>()));
      c.profile = std::move(p);
    }
    candidates.push_back(std::move(c));
  }
  if (candidates.size() != stage3_count + (has_vanilla ? 1 : 0))
    throw IoError(fmt::format("manifest promises {} candidates, found {}",
                              stage3_count + (has_vanilla ? 1 : 0), candidates.size()));
  std::size_t at = 0;
  if (has_vanilla) t.vanilla = std::move(candidates[at++]);
  for (; at < candidates.size(); ++at) t.stage3_candidates.push_back(std::move(candidates[at]));

  fs::path transcript_file = trial_dir / "transcript.txt";
  if (fs::exists(transcript_file)) {
    std::istringstream tin(read_file(transcript_file));
    while (std::getline(tin, line)) {
      if (line.empty()) continue;
      t.transcript.push_back(exchange_from_json(json::parse(line)));
    }
  }
  if (t.transcript.size() != header.at("transcript_count").get<std::size_t>())
    throw IoError("transcript length disagrees with manifest");

  validate(t);
  return t;
}

}  // namespace

std::vector<TrialRecord> load_trials(const fs::path& root, LoadDiagnostics* diag) {
  std::vector<TrialRecord> out;
  if (!fs::exists(root)) return out;

  std::vector<fs::path> trial_dirs;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("trial-", 0) == 0)
      trial_dirs.push_back(entry.path());
  }
  std::sort(trial_dirs.begin(), trial_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.string() < b.string(); });

  for (const auto& dir : trial_dirs) {
    try {
      out.push_back(load_one_trial(dir));
    } catch (const std::exception& e) {
      if (diag) diag->errors.push_back(fmt::format("{}: {}", dir.string(), e.what()));
    }
  }
  return out;
}

std::vector<std::string> extract_optimizations(const std::string& comparison_report) {
  std::vector<std::string> items;
  std::istringstream in(comparison_report);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t at = line.find_first_not_of(" \t\r");
    if (at == std::string::npos) continue;
    std::string_view rest(line.data() + at, line.size() - at);

    bool matched = false;
    if (rest.size() >= 2 && (rest[0] == '-' || rest[0] == '*') &&
        (rest[1] == ' ' || rest[1] == '\t')) {
      rest.remove_prefix(2);
      matched = true;
    } else {
      // Numbered forms: "3. item", "3) item".
      std::size_t d = 0;
      while (d < rest.size() && std::isdigit(static_cast<unsigned char>(rest[d]))) ++d;
      if (d > 0 && d + 1 < rest.size() && (rest[d] == '.' || rest[d] == ')') &&
          (rest[d + 1] == ' ' || rest[d + 1] == '\t')) {
        rest.remove_prefix(d + 2);
        matched = true;
      }
    }
    if (!matched) continue;
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t' || rest.back() == '\r'))
      rest.remove_suffix(1);
    if (!rest.empty()) items.emplace_back(rest);
  }
  return items;
}

std::string_view to_string(OptCategory c) {
  switch (c) {
    case OptCategory::MHO: return "MHO";
    case OptCategory::ACE: return "ACE";
    case OptCategory::DST: return "DST";
    case OptCategory::PTM: return "PTM";
    case OptCategory::Uncategorized: return "Uncategorized";
  }
  throw Error("unknown OptCategory value");
}

namespace {

OptCategory category_from_string(std::string_view s) {
  if (s == "MHO") return OptCategory::MHO;
  if (s == "ACE") return OptCategory::ACE;
  if (s == "DST") return OptCategory::DST;
  if (s == "PTM") return OptCategory::PTM;
  throw ConfigError(fmt::format("unknown optimization category '{}'", s));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

CategoryRules CategoryRules::parse(const std::string& text) {
  CategoryRules rules;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError(fmt::format("category rules line {}: expected CATEGORY<TAB>keyword",
                                    lineno));
    OptCategory cat = category_from_string(line.substr(0, tab));
    std::string keyword = to_lower(line.substr(tab + 1));
    if (keyword.empty())
      throw ConfigError(fmt::format("category rules line {}: empty keyword", lineno));
    rules.rules_.emplace_back(cat, std::move(keyword));
  }
  if (rules.rules_.empty()) throw ConfigError("category rules: no rules found");
  return rules;
}

CategoryRules CategoryRules::from_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot open category rules file {}", file.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const CategoryRules& CategoryRules::builtin() {
  static const CategoryRules rules = parse(detail::kCategoryRulesTsv);
  return rules;
}

OptCategory CategoryRules::categorize(const std::string& item) const {
  std::string low = to_lower(item);
  for (const auto& [cat, keyword] : rules_)
    if (low.find(keyword) != std::string::npos) return cat;
  return OptCategory::Uncategorized;
}

double CategoryDistribution::percent(OptCategory c) const {
  if (total == 0) return 0.0;
  auto it = counts.find(c);
  int n = it == counts.end() ? 0 : it->second;
  return 100.0 * static_cast<double>(n) / static_cast<double>(total);
}

CategoryDistribution categorize_all(const std::vector<std::string>& items,
                                    const CategoryRules& rules) {
  CategoryDistribution d;
  for (OptCategory c : {OptCategory::MHO, OptCategory::ACE, OptCategory::DST, OptCategory::PTM,
                        OptCategory::Uncategorized})
    d.counts[c] = 0;
  for (const auto& item : items) {
    d.counts[rules.categorize(item)] += 1;
    d.total += 1;
  }
  return d;
}

}  // namespace ecoforge
