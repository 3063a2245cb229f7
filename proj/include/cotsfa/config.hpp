#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotsfa/augment.hpp"
#include "cotsfa/dataset.hpp"
#include "cotsfa/eval.hpp"
#include "cotsfa/model.hpp"
#include "cotsfa/train.hpp"

namespace cotsfa::config {

using Document = nlohmann::ordered_json;

struct DatasetSection {
    /// "synthetic" or "csv".
    std::string source = "synthetic";
    std::filesystem::path path;
    data::CsvLayout layout = data::CsvLayout::wide;
    data::SyntheticOptions synthetic;
    /// window and horizon are copied from the model section.
    data::SplitSpec split;
    std::size_t eval_stride = 1;
};

struct EvalSection {
    std::vector<eval::TestCondition> conditions;
    std::vector<augment::ContaminationConfig> train_contaminations;
    std::vector<std::uint64_t> seeds;
    std::vector<double> lambdas;
    eval::MetricSpace metric_space = eval::MetricSpace::normalized;
    std::size_t threads = 0;
};

struct RunConfig {
    DatasetSection dataset;
    model::ModelConfig model;
    train::TrainConfig train;
    augment::ContaminationConfig contamination;
    EvalSection eval;
    /// Fully resolved document (defaults merged with the file and overrides).
    Document document;

    /// Grid variants: "base" (lambda 0) then "co" (train.lambda_align).
    std::vector<eval::Variant> variants() const;
    std::vector<eval::Scenario> scenarios() const;
};

/// Every key with its default, grouped by section.
const Document& defaults();

struct KeyInfo {
    std::string key;  // "section.name"
    std::string default_text;
    std::string help;
};

std::vector<KeyInfo> keys();

/// Merges `overlay` into the defaults; unknown sections or keys and values of
/// the wrong type throw ValidationError.
Document merge(const Document& overlay);

/// Parses a flag value for `key` ("section.name") into the default's type;
/// arrays take comma-separated items.
Document::value_type parse_value(std::string_view key, std::string_view text);

/// Sets `key` in `doc` (which must be a merged document).
void set_value(Document& doc, std::string_view key, std::string_view text);

/// Typed view of a merged document, validating every cross-field constraint.
RunConfig from_document(const Document& doc);

Document load_document(const std::filesystem::path& path);
RunConfig load(const std::filesystem::path& path);

std::string format_default(const Document::value_type& value);

}  // namespace cotsfa::config
