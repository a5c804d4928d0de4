#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "strokesig/dates.hpp"

namespace strokesig {

enum class VariableKind { Condition, Medication, Demographic, Measurement };

std::string to_string(VariableKind k);
VariableKind variable_kind_from_string(const std::string& s);

// Hierarchical dot-separated code, ICD-10-like ("I63.52").
struct CodedConcept {
  std::string code;
  VariableKind kind = VariableKind::Condition;

  bool operator==(const CodedConcept&) const = default;
};

// Prefix matching on the code hierarchy: "I63" matches "I63.52" and itself,
// but not "I632".
bool code_matches_prefix(const std::string& code, const std::string& prefix);

struct PatientRecord {
  std::string patient_id;
  Day record_start = 0;
  Day record_end = 0;
  std::vector<std::pair<Day, CodedConcept>> condition_events;
  std::map<std::string, std::vector<std::pair<Day, double>>> measurements;
  std::vector<std::pair<Day, std::set<std::string>>> med_snapshots;
  std::map<std::string, int> demographics;  // variable id -> 0/1

  double span_days() const { return static_cast<double>(record_end - record_start); }
};

struct VariableDescriptor {
  std::string id;
  VariableKind kind;
  std::string display_name;
};

struct Cohort {
  std::vector<PatientRecord> records;
  // Fixed ordering shared by every downstream matrix row index.
  std::vector<VariableDescriptor> variable_dictionary;

  std::size_t n_variables() const { return variable_dictionary.size(); }
};

// Oracle payload for recovery and attribution tests on generated cohorts.
struct SyntheticGroundTruth {
  Eigen::MatrixXd true_mixing;  // m x k_true, linearly independent columns
  // One constant activation vector per patient (sources are patient traits).
  std::vector<Eigen::VectorXd> true_source_activations;
  int planted_risk_source = 0;
};

struct RecordViolation {
  std::string field;
  std::string rule;
};

// Diagnostics, not failures: empty iff all PatientRecord invariants hold.
std::vector<RecordViolation> validate_record(const PatientRecord& record);

// Line-delimited JSON, one record per line; dictionary as a header document.
void write_cohort_jsonl(const Cohort& cohort, const std::string& records_path,
                        const std::string& dictionary_path);
Cohort read_cohort_jsonl(const std::string& records_path,
                         const std::string& dictionary_path);

}  // namespace strokesig
