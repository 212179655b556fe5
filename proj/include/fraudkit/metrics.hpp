#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace fraudkit {

/// Confusion counts with fraud (label 1) as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    require(y_true.size() == y_pred.size(), "label vectors differ in length (" + std::to_string(y_true.size()) +
                                                " vs " + std::to_string(y_pred.size()) + ")");
    require(!y_true.empty(), "confusion matrix needs at least one row");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        require((t == 0 || t == 1) && (p == 0 || p == 1), "labels must be 0 or 1");
        if (t == 1) {
            (p == 1 ? cm.tp : cm.fn) += 1;
        } else {
            (p == 1 ? cm.fp : cm.tn) += 1;
        }
    }
    return cm;
}

/// Accuracy, precision, recall and F1. An empty optional means "undefined"
/// (a zero denominator); it is never folded into 0.
struct MetricReport {
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::size_t support_pos = 0;
    std::size_t support_neg = 0;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// F1 is undefined when precision or recall is; when both are 0 it is the limit 0.
inline MetricReport metrics(const ConfusionMatrix& cm) {
    require(cm.total() >= 1, "metrics need a non-empty confusion matrix");
    MetricReport m;
    m.accuracy = static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
    if (cm.tp + cm.fp > 0) m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.tp + cm.fn > 0) m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (m.precision && m.recall) {
        const double s = *m.precision + *m.recall;
        m.f1 = s > 0.0 ? 2.0 * *m.precision * *m.recall / s : 0.0;
    }
    m.support_pos = cm.tp + cm.fn;
    m.support_neg = cm.tn + cm.fp;
    return m;
}

/// "undef" for an undefined metric, otherwise the value with 17 significant digits.
inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "undef";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

inline nlohmann::json to_json(const MetricReport& m) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"accuracy", m.accuracy},       {"precision", opt(m.precision)}, {"recall", opt(m.recall)},
            {"f1", opt(m.f1)},              {"support_pos", m.support_pos},  {"support_neg", m.support_neg}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    auto opt = [](const nlohmann::json& v) -> std::optional<double> {
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
    };
    MetricReport m;
    m.accuracy = j.at("accuracy").get<double>();
    m.precision = opt(j.at("precision"));
    m.recall = opt(j.at("recall"));
    m.f1 = opt(j.at("f1"));
    m.support_pos = j.at("support_pos").get<std::size_t>();
    m.support_neg = j.at("support_neg").get<std::size_t>();
    return m;
}

}  // namespace fraudkit
