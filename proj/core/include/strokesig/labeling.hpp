#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strokesig/cohort.hpp"
#include "strokesig/dates.hpp"

namespace strokesig {

struct CodeCriteria {
  std::set<std::string> initial_inclusion;    // code prefixes
  // Refined inclusion set after coincidence filtering; when empty the
  // initial set is used directly.
  std::set<std::string> refined_inclusion;
  std::set<std::string> noncrypto_specific;   // code prefixes, exclusion
  double coincidence_threshold = 0.30;
  int min_stroke_code_instances = 2;
  // Whether any stroke-family code (inclusion union exclusion) counts toward
  // the minimum-instances rule, or only refined inclusion codes.
  bool count_all_stroke_codes = true;

  static CodeCriteria cryptogenic_default();
  // Comparator preset: any ischemic stroke, no specificity or co-occurrence
  // exclusion.
  static CodeCriteria general_is_default();
};

CodeCriteria read_criteria_json(const std::string& path);
void write_criteria_json(const CodeCriteria& c, const std::string& path);

enum class RejectionStage {
  NoStrokeCode,
  NotSpecific,
  CoOccurringNonCryptogenic,
  SingleStrokeCode
};

std::string to_string(RejectionStage s);

struct LabelOutcome {
  bool positive = false;
  std::optional<RejectionStage> rejection_stage;
  std::optional<Day> first_event_date;
};

struct CoincidenceEntry {
  std::string code;
  int n_with_code = 0;
  int n_coinciding = 0;
  std::optional<double> rate;  // undefined when the code is never observed
  bool removed = false;
};

struct RefinedCriteria {
  CodeCriteria criteria;                 // refined inclusion set installed
  std::set<std::string> refined_inclusion;
  std::vector<CoincidenceEntry> report;
};

// Expand inclusion prefixes to observed leaf codes, compute per-code
// coincidence with non-cryptogenic-specific codes, and drop codes above the
// threshold.
RefinedCriteria refine_inclusion_codes(const Cohort& cohort,
                                       const CodeCriteria& criteria);

// Fig.-2-style staged labeling; stage order is fixed and every negative
// carries the first failing stage.
LabelOutcome label_record(const PatientRecord& record,
                          const CodeCriteria& refined);

struct PredictionWindow {
  Day start = 0;
  Day end = 0;
  bool excluded = false;  // degenerate (empty or negative-length) window
};

// Ten-year sampling window, ending one month before the first stroke code
// for positives.
PredictionWindow prediction_window(const PatientRecord& record,
                                   const LabelOutcome& outcome);

struct LabeledRecordRow {
  std::string patient_id;
  LabelOutcome outcome;
  PredictionWindow window;
};

void write_labels_csv(const std::vector<LabeledRecordRow>& rows,
                      const std::string& path);
std::vector<LabeledRecordRow> read_labels_csv(const std::string& path);

}  // namespace strokesig
