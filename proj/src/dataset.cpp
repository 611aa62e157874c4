#include "hift/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hift/rng.hpp"

namespace hift {

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::synthetic_regression: return "synthetic-regression";
        case TaskKind::synthetic_classification: return "synthetic-classification";
        case TaskKind::csv_classification: return "csv-classification";
    }
    return "synthetic-classification";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "synthetic-regression") return TaskKind::synthetic_regression;
    if (name == "synthetic-classification") return TaskKind::synthetic_classification;
    if (name == "csv-classification") return TaskKind::csv_classification;
    throw ConfigError("unknown task: " + name);
}

std::vector<std::size_t> fisher_yates_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

namespace {

// Labels come from a hidden linear readout over mean latent embeddings, so the
// task is exactly realizable by the embedding/pool/linear model family.
// Examples with a thin decision margin are resampled to keep the task clean.
void generate_classification(const DatasetSpec& spec, const ModelArch& arch,
                             std::vector<std::int64_t>& tokens, std::vector<std::int64_t>& labels) {
    const std::size_t latent = 8;
    Rng rng(spec.data_seed);
    std::vector<double> table(arch.vocab * latent);
    for (double& v : table) v = rng.next_symmetric(1.0);
    std::vector<double> readout(latent * arch.classes);
    for (double& v : readout) v = rng.next_symmetric(1.0);

    tokens.reserve(spec.num_samples * arch.seq_len);
    labels.reserve(spec.num_samples);
    std::vector<std::int64_t> candidate(arch.seq_len);
    std::vector<double> mean(latent);
    std::vector<double> scores(arch.classes);
    const double margin = 0.5;
    while (labels.size() < spec.num_samples) {
        for (std::size_t p = 0; p < arch.seq_len; ++p) {
            candidate[p] = static_cast<std::int64_t>(rng.next_below(arch.vocab));
        }
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t p = 0; p < arch.seq_len; ++p) {
            for (std::size_t d = 0; d < latent; ++d) {
                mean[d] += table[static_cast<std::size_t>(candidate[p]) * latent + d];
            }
        }
        for (double& v : mean) v /= static_cast<double>(arch.seq_len);
        for (std::size_t c = 0; c < arch.classes; ++c) {
            scores[c] = 0.0;
            for (std::size_t d = 0; d < latent; ++d) scores[c] += mean[d] * readout[d * arch.classes + c];
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < arch.classes; ++c) {
            if (scores[c] > scores[best]) best = c;
        }
        double second = -1e300;
        for (std::size_t c = 0; c < arch.classes; ++c) {
            if (c != best) second = std::max(second, scores[c]);
        }
        if (scores[best] - second < margin) continue;
        tokens.insert(tokens.end(), candidate.begin(), candidate.end());
        labels.push_back(static_cast<std::int64_t>(best));
    }
}

void generate_regression(const DatasetSpec& spec, const ModelArch& arch,
                         std::vector<double>& features, std::vector<double>& targets) {
    Rng rng(spec.data_seed);
    std::vector<double> weight(arch.in_dim * arch.out_dim);
    for (double& v : weight) v = rng.next_symmetric(1.0);
    std::vector<double> bias(arch.out_dim);
    for (double& v : bias) v = rng.next_symmetric(0.5);

    features.resize(spec.num_samples * arch.in_dim);
    targets.resize(spec.num_samples * arch.out_dim);
    for (std::size_t i = 0; i < spec.num_samples; ++i) {
        for (std::size_t d = 0; d < arch.in_dim; ++d) {
            features[i * arch.in_dim + d] = rng.next_symmetric(1.0);
        }
        for (std::size_t o = 0; o < arch.out_dim; ++o) {
            double y = bias[o];
            for (std::size_t d = 0; d < arch.in_dim; ++d) {
                y += features[i * arch.in_dim + d] * weight[d * arch.out_dim + o];
            }
            targets[i * arch.out_dim + o] = y;
        }
    }
}

void load_csv(const DatasetSpec& spec, const ModelArch& arch, std::vector<double>& features,
              std::vector<std::int64_t>& labels) {
    std::ifstream is(spec.csv_path);
    if (!is) throw IoError("cannot open csv: " + spec.csv_path.string());
    auto chomp = [](std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    };
    std::string line;
    if (!std::getline(is, line)) throw ParseError("csv: missing header row");
    chomp(line);
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == spec.label_column) label_idx = i;
    }
    if (label_idx == header.size()) {
        throw ParseError("csv: label column '" + spec.label_column + "' not found in header");
    }
    const std::size_t feature_count = header.size() - 1;
    if (feature_count != arch.in_dim) {
        throw ConfigError("csv: " + std::to_string(feature_count) +
                          " feature columns but arch.in_dim=" + std::to_string(arch.in_dim));
    }

    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        chomp(line);
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t col = 0;
        std::size_t feat = 0;
        while (std::getline(ls, cell, ',')) {
            if (col == label_idx) {
                raw_labels.push_back(cell);
            } else {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(cell, &used);
                    if (used != cell.size()) throw std::invalid_argument(cell);
                    features.push_back(v);
                } catch (const std::exception&) {
                    throw ParseError("csv line " + std::to_string(line_no) +
                                     ": non-numeric feature '" + cell + "'");
                }
                ++feat;
            }
            ++col;
        }
        if (col != header.size()) {
            throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " columns, got " + std::to_string(col));
        }
        (void)feat;
    }
    if (raw_labels.empty()) throw ParseError("csv: no data rows");

    // Deterministic label vocabulary: sorted distinct strings.
    std::vector<std::string> vocab(raw_labels);
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    if (vocab.size() > arch.classes) {
        throw VocabularyError("csv: " + std::to_string(vocab.size()) +
                              " distinct labels exceed arch.classes=" +
                              std::to_string(arch.classes));
    }
    std::map<std::string, std::int64_t> lookup;
    for (std::size_t i = 0; i < vocab.size(); ++i) lookup[vocab[i]] = static_cast<std::int64_t>(i);
    labels.reserve(raw_labels.size());
    for (const std::string& l : raw_labels) labels.push_back(lookup.at(l));
}

}  // namespace

Dataset Dataset::make(const DatasetSpec& spec, const ModelArch& arch) {
    Dataset ds;
    ds.spec_ = spec;
    ds.arch_ = arch;
    switch (spec.task) {
        case TaskKind::synthetic_classification:
            if (arch.input != InputKind::tokens || arch.head != HeadKind::classifier) {
                throw ConfigError("synthetic-classification needs token input and classifier head");
            }
            generate_classification(spec, arch, ds.tokens_, ds.labels_);
            break;
        case TaskKind::synthetic_regression:
            if (arch.input != InputKind::vector || arch.head != HeadKind::regressor) {
                throw ConfigError("synthetic-regression needs vector input and regressor head");
            }
            generate_regression(spec, arch, ds.features_, ds.targets_);
            break;
        case TaskKind::csv_classification:
            if (arch.input != InputKind::vector || arch.head != HeadKind::classifier) {
                throw ConfigError("csv-classification needs vector input and classifier head");
            }
            load_csv(spec, arch, ds.features_, ds.labels_);
            break;
    }
    const std::size_t n = spec.task == TaskKind::synthetic_regression
                              ? ds.targets_.size() / arch.out_dim
                              : ds.labels_.size();
    if (n < 2) throw ConfigError("dataset: need at least 2 examples");
    ds.order_ = fisher_yates_order(n, spec.data_seed);
    auto holdout = static_cast<std::size_t>(std::floor(spec.holdout_fraction * static_cast<double>(n)));
    holdout = std::min(holdout, n - 1);
    ds.train_count_ = n - holdout;
    return ds;
}

Batch Dataset::gather(std::size_t first, std::size_t count) const {
    Batch b;
    b.size = count;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t ex = order_[first + i];
        if (arch_.input == InputKind::tokens) {
            const auto* begin = tokens_.data() + ex * arch_.seq_len;
            b.tokens.insert(b.tokens.end(), begin, begin + arch_.seq_len);
        } else {
            const auto* begin = features_.data() + ex * arch_.in_dim;
            b.features.insert(b.features.end(), begin, begin + arch_.in_dim);
        }
        if (spec_.task == TaskKind::synthetic_regression) {
            const auto* begin = targets_.data() + ex * arch_.out_dim;
            b.targets.insert(b.targets.end(), begin, begin + arch_.out_dim);
        } else {
            b.labels.push_back(labels_[ex]);
        }
    }
    return b;
}

Batch Dataset::next_batch(std::size_t batch_size) {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (cursor_ >= train_count_) cursor_ = 0;
    const std::size_t count = std::min(batch_size, train_count_ - cursor_);
    Batch b = gather(cursor_, count);
    cursor_ += count;
    return b;
}

Batch Dataset::eval_examples() const {
    if (eval_size() == 0) throw ContractError("dataset: empty holdout split");
    return gather(train_count_, eval_size());
}

}  // namespace hift
