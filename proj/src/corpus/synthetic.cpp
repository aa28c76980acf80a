#include "kt/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "kt/error.hpp"
#include "kt/rng.hpp"

namespace kt::corpus {

namespace {

using Phrases = std::vector<std::string>;

const Phrases kKineticShared = {
    "mva",
    "motor vehicle accident",
    "car collision",
    "pedestrian struck by car",
    "motorbike crash",
    "fell from bicycle at speed",
    "rollover on highway",
    "driver in head on collision",
};

const Phrases kKineticHospitalOnly = {
    "rta",
    "mbc",
    "pbc off",
    "scooter vs car",
    "quad bike rollover",
    "tboned at intersection",
};

const Phrases kComplaints = {
    "chest pain",
    "shortness of breath",
    "abdo pain",
    "fever and cough",
    "headache",
    "fall from standing",
    "laceration to hand",
    "syncope at home",
    "back pain",
    "vomiting",
    "rash",
    "dizziness",
    "urinary symptoms",
    "sore throat",
    "palpitations",
    "ankle sprain playing soccer",
};

const Phrases kNarrativeFiller = {
    "patient presented to the emergency department",
    "history of hypertension",
    "vital signs stable",
    "no loss of consciousness",
    "alert and oriented",
    "complains of pain",
    "pain in left arm",
    "pain in right leg",
    "neck tenderness",
    "denies nausea",
    "was brought in by ambulance",
    "family at bedside",
};

const Phrases kHospitalFiller = {
    "pt", "gcs 15", "obs stable", "ambulant", "c/o pain", "nil loc", "hx htn", "bib amb", "l) arm pain",
    "r) leg pain", "neck ttp", "denies n/v", "pain 7/10", "afebrile", "alert",
};

const Phrases kSex = {"male", "female"};

std::string pick(const Phrases& p, SplitMix64& rng) {
    return p[rng.below(p.size())];
}

std::string compose(bool positive, SyntheticDomain domain, SplitMix64& rng) {
    std::vector<std::string> clauses;
    const bool hospital = domain == SyntheticDomain::hospital;
    if (positive) {
        const bool local = hospital && rng.uniform() < 0.6;
        clauses.push_back(pick(local ? kKineticHospitalOnly : kKineticShared, rng));
    } else {
        clauses.push_back(pick(kComplaints, rng));
    }
    const Phrases& filler = hospital ? kHospitalFiller : kNarrativeFiller;
    const std::size_t extra = 1 + rng.below(hospital ? 4 : 3);
    for (std::size_t i = 0; i < extra; ++i) clauses.push_back(pick(filler, rng));
    seeded_shuffle(clauses.begin() + 1, clauses.end(), rng);
    // Demographics, then the complaint or mechanism, then free filler.
    std::ostringstream note;
    const auto age = 18 + rng.below(73);
    if (hospital) {
        note << age << (rng.uniform() < 0.5 ? "m " : "f ");
    } else {
        note << age << " year old " << pick(kSex, rng) << ", ";
    }
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i) note << (hospital ? ". " : ", ");
        note << clauses[i];
    }
    note << '.';
    return note.str();
}

void add_words(const std::string& phrase, std::set<std::string>& words) {
    std::string cur;
    for (unsigned char c : phrase) {
        if (std::isalpha(c)) {
            cur.push_back(static_cast<char>(c));
        } else {
            if (!cur.empty()) words.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.insert(cur);
}

}  // namespace

LabelledDataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.records < 2) throw DataError("synthetic corpus needs at least 2 records");
    if (!(spec.positive_fraction > 0.0 && spec.positive_fraction < 1.0))
        throw DataError("positive_fraction must lie in (0, 1)");
    SplitMix64 rng(hash_combine({spec.seed, static_cast<std::uint64_t>(spec.domain), 0x73796eULL}));

    const auto n_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(spec.records)));
    std::vector<int> labels(spec.records, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
    seeded_shuffle(labels.begin(), labels.end(), rng);

    const Source source = spec.domain == SyntheticDomain::hospital ? Source::hospital : Source::mimic_like;
    std::vector<TriageRecord> records;
    records.reserve(spec.records);
    for (std::size_t i = 0; i < spec.records; ++i) {
        std::ostringstream id;
        id << spec.id_prefix << '-' << std::setw(6) << std::setfill('0') << i;
        records.push_back({id.str(), compose(labels[i] == 1, spec.domain, rng), labels[i], source});
    }
    return LabelledDataset(std::move(records));
}

std::vector<std::string> synthetic_vocab() {
    std::set<std::string> words;
    for (const auto* group : {&kKineticShared, &kKineticHospitalOnly, &kComplaints, &kNarrativeFiller,
                              &kHospitalFiller, &kSex})
        for (const auto& p : *group) add_words(p, words);
    for (const char* w : {"year", "old", "m", "f"}) words.insert(w);

    // Split a few stems so they are only reachable through continuation
    // pieces: "motorbike" -> motor ##bike, "ambulance" -> ambul ##ance.
    words.erase("motorbike");
    words.erase("ambulance");

    std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    for (const char* p : {".", ",", "/", ")", "(", "-", ":"}) vocab.emplace_back(p);
    for (char d = '0'; d <= '9'; ++d) vocab.emplace_back(1, d);
    for (char d = '0'; d <= '9'; ++d) vocab.push_back(std::string("##") + d);
    vocab.insert(vocab.end(), words.begin(), words.end());
    for (const char* p : {"motor", "ambul", "##bike", "##ance", "##ed", "##s", "##m", "##f"}) vocab.emplace_back(p);
    // Deduplicate while keeping first occurrence.
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& t : vocab)
        if (seen.insert(t).second) out.push_back(std::move(t));
    return out;
}

}  // namespace kt::corpus
