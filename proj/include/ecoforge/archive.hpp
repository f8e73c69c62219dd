#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ecoforge/types.hpp"

namespace ecoforge {

/// JSONL manifest for one trial: a header record followed by one record per
/// candidate. Keys are emitted sorted and doubles shortest-round-trip, so
/// equal records serialize to identical bytes.
std::string serialize_trial_manifest(const TrialRecord& t);

/// One exchange per line.
std::string serialize_transcript(const std::vector<LlmExchange>& transcript);

/// Sample log in the plain trace text format: "offset_s watts" per line.
std::string serialize_profile_samples(const PowerProfile& p);
std::vector<PowerSample> parse_profile_samples(const std::string& text);

/// Test seam for the atomicity property: runs after the temp directory is
/// fully written, immediately before the rename to the final path.
struct PersistHooks {
  std::function<void()> before_finalize;
};

/// Writes `<root>/<app>/<device>/trial-NNN/` with manifest.jsonl, one
/// candidate-<i>.src and profile-<i>.txt per candidate, profile-source.txt
/// for the baseline, and transcript.txt. NNN is the next free index. The
/// directory appears atomically (temp dir + rename); on failure nothing is
/// visible at the final path. Returns the trial directory.
std::filesystem::path persist_trial(const TrialRecord& record, const std::filesystem::path& root,
                                    const PersistHooks* hooks = nullptr);

struct LoadDiagnostics {
  std::vector<std::string> errors;  // one message per skipped trial directory
};

/// Loads every trial under root in lexicographic directory order. Malformed
/// trials are skipped and reported through `diag`, never fatal. A missing
/// root yields an empty list.
std::vector<TrialRecord> load_trials(const std::filesystem::path& root,
                                     LoadDiagnostics* diag = nullptr);

/// Bullet / numbered list items of a comparison report, flattened in document
/// order. Empty result means the report listed nothing (report is archived
/// regardless).
std::vector<std::string> extract_optimizations(const std::string& comparison_report);

/// The four optimization families plus the fallback bucket.
enum class OptCategory { MHO, ACE, DST, PTM, Uncategorized };
std::string_view to_string(OptCategory c);

/// Ordered substring rules over lower-cased items; first match wins.
class CategoryRules {
 public:
  /// Lines of "CATEGORY<TAB>keyword"; '#' starts a comment.
  static CategoryRules parse(const std::string& text);
  static CategoryRules from_file(const std::filesystem::path& file);
  /// The ruleset shipped in data/category_rules.tsv, compiled in as a default.
  static const CategoryRules& builtin();

  OptCategory categorize(const std::string& item) const;
  std::size_t size() const { return rules_.size(); }

 private:
  std::vector<std::pair<OptCategory, std::string>> rules_;
};

struct CategoryDistribution {
  std::map<OptCategory, int> counts;  // every category present, zeros included
  int total = 0;
  double percent(OptCategory c) const;
};

CategoryDistribution categorize_all(const std::vector<std::string>& items,
                                    const CategoryRules& rules);

}  // namespace ecoforge
