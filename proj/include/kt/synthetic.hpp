#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kt/corpus.hpp"

namespace kt::corpus {

// Two synthetic "institutions". Both are keyword-separable: every positive
// note carries at least one vehicular-kinetic phrase and no negative does.
// The hospital domain writes in terser triage shorthand and uses several
// kinetic abbreviations the narrative domain never produces, which gives a
// measurable domain shift for adaptation experiments.
enum class SyntheticDomain { narrative, hospital };

struct SyntheticSpec {
    std::size_t records = 1000;
    double positive_fraction = 0.45;
    SyntheticDomain domain = SyntheticDomain::narrative;
    std::uint64_t seed = 1;
    std::string id_prefix = "syn";
};

LabelledDataset make_synthetic(const SyntheticSpec& spec);

// Vocabulary covering every word the generator emits, with the four special
// tokens first ([PAD]=0, [UNK]=1, [CLS]=2, [SEP]=3). Digits and a few stems
// are only reachable through "##" continuation pieces.
std::vector<std::string> synthetic_vocab();

}  // namespace kt::corpus
