#include <algorithm>
#include <cmath>
#include <numeric>

#include "kt/corpus.hpp"
#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::corpus {

namespace {

std::vector<TriageRecord> gather(const LabelledDataset& data, std::vector<std::size_t> idx) {
    // Members keep their original file order within each half.
    std::sort(idx.begin(), idx.end());
    std::vector<TriageRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data[i]);
    return out;
}

}  // namespace

Split split(const LabelledDataset& data, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw DataError("train_fraction must lie in (0, 1)");
    const std::size_t n = data.size();
    if (n < 2) throw DataError("split needs at least 2 records");

    auto total_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
    total_train = std::clamp<std::size_t>(total_train, 1, n - 1);

    SplitMix64 rng(hash_combine({spec.seed, 0x73706c6974ULL /* "split" */}));

    std::vector<std::size_t> train_idx, val_idx;
    if (!spec.stratified) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        seeded_shuffle(all.begin(), all.end(), rng);
        train_idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(total_train));
        val_idx.assign(all.begin() + static_cast<std::ptrdiff_t>(total_train), all.end());
    } else {
        if (data.positives() == 0 || data.negatives() == 0)
            throw DataError("stratified split requires both classes to be present");
        std::vector<std::size_t> by_class[2];
        for (std::size_t i = 0; i < n; ++i) by_class[*data[i].label].push_back(i);

        // Largest-remainder apportionment of total_train across the classes.
        std::size_t quota[2];
        double remainder[2];
        std::size_t assigned = 0;
        for (int c = 0; c < 2; ++c) {
            const double exact = static_cast<double>(total_train) * static_cast<double>(by_class[c].size()) /
                                 static_cast<double>(n);
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            remainder[c] = exact - static_cast<double>(quota[c]);
            assigned += quota[c];
        }
        while (assigned < total_train) {
            // Ties go to the larger class, then to class 0.
            int pick = remainder[1] > remainder[0] ||
                               (remainder[1] == remainder[0] && by_class[1].size() > by_class[0].size())
                           ? 1
                           : 0;
            if (quota[pick] >= by_class[pick].size()) pick = 1 - pick;
            ++quota[pick];
            remainder[pick] = -1.0;
            ++assigned;
        }
        for (int c = 0; c < 2; ++c) {
            auto& members = by_class[c];
            seeded_shuffle(members.begin(), members.end(), rng);
            train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
            val_idx.insert(val_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
        }
    }
    return Split{LabelledDataset(gather(data, std::move(train_idx))), LabelledDataset(gather(data, std::move(val_idx)))};
}

}  // namespace kt::corpus
