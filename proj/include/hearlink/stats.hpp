#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hearlink/aggregation.hpp"
#include "hearlink/errors.hpp"
#include "hearlink/linkage.hpp"

namespace hearlink::stats {

struct Correlation {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Sample Pearson r with a two-sided p from Student's t on n - 2 degrees of freedom.
/// Throws InsufficientData (n < 3, length mismatch) or DegenerateInput (zero variance).
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Pearson on average ranks.
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> ranks(std::span<const double> x);

struct FdrResult {
    std::vector<bool> rejected;  // input order
    std::vector<double> q;       // input order
    std::size_t rejections = 0;
};

/// Benjamini-Hochberg step-up. Throws ValidationError for p outside [0, 1].
FdrResult bh_fdr(std::span<const double> p, double alpha = 0.05);

/// (mean_a - mean_b) / pooled sd. Returns +-infinity for separated constant groups.
/// Throws InsufficientData when either group has fewer than two values.
double cohens_d(std::span<const double> a, std::span<const double> b);

enum class Gender { Male, Female, Other };
enum class Stratum { Pooled, Male, Female };
enum class StrataPlan { Pooled, ByGender };

std::string_view to_string(Gender g);
std::string_view to_string(Stratum s);
std::string_view to_string(StrataPlan p);
Gender parse_gender(std::string_view text);

/// Pooled when |d| <= threshold.
StrataPlan stratify(double d, double threshold = 0.2);

struct SubjectRow {
    std::string subject_id;
    Gender gender = Gender::Other;
    std::map<std::string, double> features;          // absent when missing
    std::array<std::optional<int>, 9> phq{};         // item Q1..Q9

    /// Ground truth for DSM-5 indicator `i` through the PHQ item mapped to it.
    [[nodiscard]] std::optional<double> indicator_score(int indicator) const;
};

struct Manifest {
    std::vector<std::string> feature_columns;
    std::vector<SubjectRow> rows;

    /// Tab-separated: subject_id, gender, feature columns, phq_q1..phq_q9 (any
    /// subset). Empty or NA cells are missing. Throws ManifestError.
    static Manifest parse(std::istream& in);
    static Manifest load(const std::filesystem::path& path);
    void write(std::ostream& out) const;
};

struct Hypothesis {
    std::string id;
    std::vector<std::string> features;
    std::vector<int> indicators;
    Direction direction = Direction::Negative;
};

/// H1 pitch variability (-), H2 pausing (+), H3 energy dynamics (-), H4 tempo (-),
/// each against indicators 5 and 8.
std::vector<Hypothesis> default_hypotheses();

enum class Method { Pearson, Spearman };

struct ProtocolConfig {
    double alpha = 0.05;
    double d_threshold = 0.2;
    Method method = Method::Pearson;
    std::vector<Hypothesis> hypotheses = default_hypotheses();

    /// `{"alpha", "d_threshold", "method": "pearson"|"spearman", "hypotheses": [...]}`.
    static ProtocolConfig from_json(const nlohmann::json& j);
};

struct AssociationResult {
    std::string hypothesis;
    std::string feature;
    int indicator = 0;
    Stratum stratum = Stratum::Pooled;
    std::size_t n = 0;
    double r = 0.0;
    double p = 1.0;
    double q = 1.0;
    bool significant = false;
    Direction hypothesized = Direction::Negative;
    bool direction_consistent = false;
};

struct SkippedTest {
    std::string feature;
    int indicator = 0;
    Stratum stratum = Stratum::Pooled;
    std::string reason;
};

struct FeatureScreen {
    std::string feature;
    std::optional<double> d;  // male minus female
    StrataPlan plan = StrataPlan::Pooled;
};

struct ProtocolResult {
    std::vector<FeatureScreen> screens;
    std::vector<AssociationResult> results;  // sorted by (feature, indicator, stratum)
    std::vector<SkippedTest> skipped;
    std::size_t rejections = 0;
};

/// Screens, tests and corrects one family. Throws ManifestError when a
/// hypothesis names a feature column the manifest lacks.
ProtocolResult run_protocol(const Manifest& manifest, const ProtocolConfig& config = {});

/// Writes results.tsv, r_matrix.tsv, p_matrix.tsv, q_matrix.tsv, cohens_d.tsv, skipped.tsv.
void export_protocol(const ProtocolResult& result, const std::filesystem::path& out_dir);

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Mean of each metric over the quality windows of one session.
std::map<std::string, double> session_means(std::span<const HLDWindow> windows);

}  // namespace hearlink::stats
