#include "hearlink/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

namespace hearlink::stats {

namespace {

double mean_of(std::span<const double> v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean)
{
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return ss / static_cast<double>(v.size() - 1);
}

std::vector<std::string> split_tabs(const std::string& line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        cells.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) {
            break;
        }
        start = pos + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) {
            c.pop_back();
        }
        while (!c.empty() && c.front() == ' ') {
            c.erase(c.begin());
        }
    }
    return cells;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "na" || cell == "nan"; }

std::optional<int> phq_column(const std::string& name)
{
    if (name.size() == 6 && name.rfind("phq_q", 0) == 0 && name[5] >= '1' && name[5] <= '9') {
        return name[5] - '1';
    }
    return std::nullopt;
}

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw InsufficientData("pearson: x and y differ in length");
    }
    const std::size_t n = x.size();
    if (n < 3) {
        throw InsufficientData("pearson: need at least 3 pairs, got " + std::to_string(n));
    }
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw DegenerateInput("pearson: zero variance");
    }
    Correlation c;
    c.n = n;
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double dof = static_cast<double>(n - 2);
    const double denom = 1.0 - c.r * c.r;
    if (denom <= 0.0) {
        c.p = 0.0;
        return c;
    }
    const double t = std::abs(c.r) * std::sqrt(dof / denom);
    const boost::math::students_t dist(dof);
    c.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
    return c;
}

std::vector<double> ranks(std::span<const double> x)
{
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

Correlation spearman(std::span<const double> x, std::span<const double> y)
{
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    return pearson(rx, ry);
}

FdrResult bh_fdr(std::span<const double> p, double alpha)
{
    const std::size_t m = p.size();
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("bh_fdr: p-value outside [0, 1]");
        }
    }
    FdrResult out;
    out.rejected.assign(m, false);
    out.q.assign(m, 1.0);
    if (m == 0) {
        return out;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

    std::size_t k = 0;
    for (std::size_t i = 1; i <= m; ++i) {
        if (p[order[i - 1]] <= static_cast<double>(i) * alpha / static_cast<double>(m)) {
            k = i;
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        out.rejected[order[i]] = true;
    }
    out.rejections = k;

    double running = 1.0;
    for (std::size_t i = m; i >= 1; --i) {
        const double candidate = p[order[i - 1]] * (static_cast<double>(m) / static_cast<double>(i));  // factor >= 1 keeps q >= p
        running = std::min(running, candidate);
        out.q[order[i - 1]] = std::min(running, 1.0);
    }
    return out;
}

double cohens_d(std::span<const double> a, std::span<const double> b)
{
    if (a.size() < 2 || b.size() < 2) {
        throw InsufficientData("cohens_d: each group needs at least 2 values");
    }
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double pooled =
        std::sqrt(((na - 1.0) * sample_variance(a, ma) + (nb - 1.0) * sample_variance(b, mb)) / (na + nb - 2.0));
    if (ma == mb) {
        return 0.0;
    }
    if (pooled == 0.0) {
        return ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return (ma - mb) / pooled;
}

std::string_view to_string(Gender g)
{
    switch (g) {
    case Gender::Male:
        return "male";
    case Gender::Female:
        return "female";
    case Gender::Other:
        break;
    }
    return "other";
}

std::string_view to_string(Stratum s)
{
    switch (s) {
    case Stratum::Male:
        return "male";
    case Stratum::Female:
        return "female";
    case Stratum::Pooled:
        break;
    }
    return "pooled";
}

std::string_view to_string(StrataPlan p) { return p == StrataPlan::Pooled ? "pooled" : "by_gender"; }

Gender parse_gender(std::string_view text)
{
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "male" || t == "m" || t == "1") {
        return Gender::Male;
    }
    if (t == "female" || t == "f" || t == "0") {
        return Gender::Female;
    }
    return Gender::Other;
}

StrataPlan stratify(double d, double threshold)
{
    return std::abs(d) <= threshold ? StrataPlan::Pooled : StrataPlan::ByGender;
}

std::optional<double> SubjectRow::indicator_score(int indicator) const
{
    for (std::size_t k = 0; k < kPhqItemIndicator.size(); ++k) {
        if (kPhqItemIndicator[k] == indicator) {
            if (phq[k]) {
                return static_cast<double>(*phq[k]);
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

Manifest Manifest::parse(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw ManifestError("manifest is empty");
    }
    const auto header = split_tabs(line);
    std::optional<std::size_t> subject_col;
    std::optional<std::size_t> gender_col;
    std::map<std::size_t, int> phq_cols;
    std::map<std::size_t, std::string> feature_cols;
    std::set<std::string> seen;
    Manifest m;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& name = header[i];
        if (name.empty() || !seen.insert(name).second) {
            throw ManifestError("empty or duplicate column name '" + name + "'");
        }
        if (name == "subject_id") {
            subject_col = i;
        } else if (name == "gender") {
            gender_col = i;
        } else if (auto item = phq_column(name)) {
            phq_cols[i] = *item;
        } else {
            feature_cols[i] = name;
            m.feature_columns.push_back(name);
        }
    }
    if (!subject_col || !gender_col) {
        throw ManifestError("manifest header needs subject_id and gender columns");
    }

    std::set<std::string> subjects;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_tabs(line);
        if (cells.size() != header.size()) {
            throw ManifestError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                " cells, got " + std::to_string(cells.size()));
        }
        SubjectRow row;
        row.subject_id = cells[*subject_col];
        if (row.subject_id.empty() || !subjects.insert(row.subject_id).second) {
            throw ManifestError("line " + std::to_string(line_no) + ": empty or repeated subject_id");
        }
        row.gender = parse_gender(cells[*gender_col]);
        for (const auto& [col, name] : feature_cols) {
            if (is_missing(cells[col])) {
                continue;
            }
            double v = 0.0;
            const auto& c = cells[col];
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (ec != std::errc{} || ptr != c.data() + c.size() || !std::isfinite(v)) {
                throw ManifestError("line " + std::to_string(line_no) + ": bad value '" + c + "' for " + name);
            }
            row.features[name] = v;
        }
        for (const auto& [col, item] : phq_cols) {
            if (is_missing(cells[col])) {
                continue;
            }
            const auto& c = cells[col];
            int v = -1;
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (ec != std::errc{} || ptr != c.data() + c.size() || v < 0 || v > 3) {
                throw ManifestError("line " + std::to_string(line_no) + ": PHQ item must be 0..3, got '" + c + "'");
            }
            row.phq[static_cast<std::size_t>(item)] = v;
        }
        m.rows.push_back(std::move(row));
    }
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ManifestError("cannot open manifest " + path.string());
    }
    return parse(in);
}

void Manifest::write(std::ostream& out) const
{
    out << "subject_id\tgender";
    for (const auto& f : feature_columns) {
        out << '\t' << f;
    }
    for (int k = 1; k <= 9; ++k) {
        out << "\tphq_q" << k;
    }
    out << '\n';
    for (const auto& row : rows) {
        out << row.subject_id << '\t' << to_string(row.gender);
        for (const auto& f : feature_columns) {
            auto it = row.features.find(f);
            out << '\t' << (it == row.features.end() ? std::string("NA") : format_double(it->second));
        }
        for (const auto& item : row.phq) {
            out << '\t' << (item ? std::to_string(*item) : std::string("NA"));
        }
        out << '\n';
    }
}

std::vector<Hypothesis> default_hypotheses()
{
    return {
        {"H1", {"f0_std", "f0_range"}, {5, 8}, Direction::Negative},
        {"H2", {"pause_duration", "pause_frequency"}, {5, 8}, Direction::Positive},
        {"H3", {"intensity_std", "intensity_range"}, {5, 8}, Direction::Negative},
        {"H4", {"speech_rate", "articulation_rate"}, {5, 8}, Direction::Negative},
    };
}

ProtocolConfig ProtocolConfig::from_json(const nlohmann::json& j)
{
    ProtocolConfig c;
    try {
        c.alpha = j.value("alpha", c.alpha);
        c.d_threshold = j.value("d_threshold", c.d_threshold);
        const auto method = j.value("method", std::string("pearson"));
        if (method == "pearson") {
            c.method = Method::Pearson;
        } else if (method == "spearman") {
            c.method = Method::Spearman;
        } else {
            throw ConfigError("unknown correlation method '" + method + "'");
        }
        if (j.contains("hypotheses")) {
            c.hypotheses.clear();
            for (const auto& h : j.at("hypotheses")) {
                Hypothesis hyp;
                hyp.id = h.at("id").get<std::string>();
                hyp.features = h.at("features").get<std::vector<std::string>>();
                hyp.indicators = h.at("indicators").get<std::vector<int>>();
                hyp.direction = parse_direction(h.at("direction").get<std::string>());
                c.hypotheses.push_back(std::move(hyp));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stats config: ") + e.what());
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0) || c.d_threshold < 0.0) {
        throw ConfigError("stats config: alpha must be in (0, 1) and d_threshold >= 0");
    }
    return c;
}

ProtocolResult run_protocol(const Manifest& manifest, const ProtocolConfig& config)
{
    const std::set<std::string> columns(manifest.feature_columns.begin(), manifest.feature_columns.end());

    // (feature, indicator) -> hypothesis, in deterministic key order.
    std::map<std::pair<std::string, int>, const Hypothesis*> plan;
    for (const auto& h : config.hypotheses) {
        for (const auto& f : h.features) {
            if (columns.count(f) == 0) {
                throw ManifestError("manifest has no column for feature '" + f + "' (" + h.id + ")");
            }
            for (int i : h.indicators) {
                if (i < 1 || i > kIndicatorCount) {
                    throw ConfigError("hypothesis " + h.id + " names indicator " + std::to_string(i));
                }
                plan.emplace(std::pair{f, i}, &h);
            }
        }
    }

    ProtocolResult out;
    std::map<std::string, StrataPlan> strata;
    for (const auto& [key, hyp] : plan) {
        const auto& feature = key.first;
        if (strata.count(feature) != 0) {
            continue;
        }
        std::vector<double> male;
        std::vector<double> female;
        for (const auto& row : manifest.rows) {
            auto it = row.features.find(feature);
            if (it == row.features.end()) {
                continue;
            }
            if (row.gender == Gender::Male) {
                male.push_back(it->second);
            } else if (row.gender == Gender::Female) {
                female.push_back(it->second);
            }
        }
        FeatureScreen screen{feature, std::nullopt, StrataPlan::Pooled};
        if (male.size() >= 2 && female.size() >= 2) {
            screen.d = cohens_d(male, female);
            screen.plan = stratify(*screen.d, config.d_threshold);
        }
        strata[feature] = screen.plan;
        out.screens.push_back(screen);
    }

    for (const auto& [key, hyp] : plan) {
        const auto& [feature, indicator] = key;
        std::vector<Stratum> to_test;
        if (strata[feature] == StrataPlan::Pooled) {
            to_test = {Stratum::Pooled};
        } else {
            to_test = {Stratum::Male, Stratum::Female};
        }
        for (Stratum s : to_test) {
            std::vector<double> x;
            std::vector<double> y;
            for (const auto& row : manifest.rows) {
                if ((s == Stratum::Male && row.gender != Gender::Male) ||
                    (s == Stratum::Female && row.gender != Gender::Female)) {
                    continue;
                }
                auto it = row.features.find(feature);
                auto truth = row.indicator_score(indicator);
                if (it == row.features.end() || !truth) {
                    continue;
                }
                x.push_back(it->second);
                y.push_back(*truth);
            }
            try {
                const auto c = config.method == Method::Pearson ? pearson(x, y) : spearman(x, y);
                AssociationResult r;
                r.hypothesis = hyp->id;
                r.feature = feature;
                r.indicator = indicator;
                r.stratum = s;
                r.n = c.n;
                r.r = c.r;
                r.p = c.p;
                r.hypothesized = hyp->direction;
                r.direction_consistent = hyp->direction == Direction::Negative   ? c.r < 0.0
                                         : hyp->direction == Direction::Positive ? c.r > 0.0
                                                                                 : true;
                out.results.push_back(std::move(r));
            } catch (const Error& e) {
                out.skipped.push_back({feature, indicator, s, e.what()});
            }
        }
    }

    std::vector<double> p;
    p.reserve(out.results.size());
    for (const auto& r : out.results) {
        p.push_back(r.p);
    }
    const auto fdr = bh_fdr(p, config.alpha);
    for (std::size_t i = 0; i < out.results.size(); ++i) {
        out.results[i].q = fdr.q[i];
        out.results[i].significant = fdr.rejected[i];
    }
    out.rejections = fdr.rejections;
    return out;
}

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "NA";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, ptr};
}

namespace {

void write_matrix(const ProtocolResult& result, const std::filesystem::path& path,
                  double AssociationResult::*field)
{
    std::set<std::string> features;
    std::set<std::pair<int, Stratum>> cols;
    std::map<std::tuple<std::string, int, Stratum>, double> cells;
    for (const auto& r : result.results) {
        features.insert(r.feature);
        cols.insert({r.indicator, r.stratum});
        cells[{r.feature, r.indicator, r.stratum}] = r.*field;
    }
    std::ofstream out(path, std::ios::binary);
    out << "feature";
    for (const auto& [i, s] : cols) {
        out << "\tindicator_" << i << '_' << to_string(s);
    }
    out << '\n';
    for (const auto& f : features) {
        out << f;
        for (const auto& [i, s] : cols) {
            auto it = cells.find({f, i, s});
            out << '\t' << (it == cells.end() ? std::string("NA") : format_double(it->second));
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

}  // namespace

void export_protocol(const ProtocolResult& result, const std::filesystem::path& out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    }
    {
        std::ofstream out(out_dir / "results.tsv", std::ios::binary);
        out << "hypothesis\tfeature\tindicator\tstratum\tn\tr\tp\tq\tsignificant\thypothesized_direction\t"
               "direction_consistent\n";
        for (const auto& r : result.results) {
            out << r.hypothesis << '\t' << r.feature << '\t' << r.indicator << '\t' << to_string(r.stratum) << '\t'
                << r.n << '\t' << format_double(r.r) << '\t' << format_double(r.p) << '\t' << format_double(r.q)
                << '\t' << (r.significant ? "true" : "false") << '\t' << to_string(r.hypothesized) << '\t'
                << (r.direction_consistent ? "true" : "false") << '\n';
        }
        if (!out) {
            throw IoError("cannot write results.tsv");
        }
    }
    write_matrix(result, out_dir / "r_matrix.tsv", &AssociationResult::r);
    write_matrix(result, out_dir / "p_matrix.tsv", &AssociationResult::p);
    write_matrix(result, out_dir / "q_matrix.tsv", &AssociationResult::q);
    {
        std::ofstream out(out_dir / "cohens_d.tsv", std::ios::binary);
        out << "feature\td\tplan\n";
        for (const auto& s : result.screens) {
            out << s.feature << '\t' << (s.d ? format_double(*s.d) : std::string("NA")) << '\t' << to_string(s.plan)
                << '\n';
        }
    }
    {
        std::ofstream out(out_dir / "skipped.tsv", std::ios::binary);
        out << "feature\tindicator\tstratum\treason\n";
        for (const auto& s : result.skipped) {
            out << s.feature << '\t' << s.indicator << '\t' << to_string(s.stratum) << '\t' << s.reason << '\n';
        }
    }
}

std::map<std::string, double> session_means(std::span<const HLDWindow> windows)
{
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& w : windows) {
        if (!w.quality_ok) {
            continue;
        }
        for (const auto& [name, v] : w.metrics) {
            auto& s = sums[name];
            s.first += v;
            ++s.second;
        }
    }
    std::map<std::string, double> out;
    for (const auto& [name, s] : sums) {
        out[name] = s.first / static_cast<double>(s.second);
    }
    return out;
}

}  // namespace hearlink::stats
