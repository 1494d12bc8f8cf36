// Copyright 2026 The pathmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathmoe/train/corpus.hpp"

#include <fstream>
#include <sstream>

#include "pathmoe/common.hpp"

namespace pathmoe {

std::vector<std::int32_t> byte_tokens(const std::string& text) {
    std::vector<std::int32_t> out(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) out[i] = static_cast<unsigned char>(text[i]);
    return out;
}

Corpus split_corpus(const std::string& text, double val_fraction) {
    if (text.empty()) throw DataError("corpus is empty");
    if (!(val_fraction >= 0 && val_fraction < 1)) throw UsageError("train.val_fraction: must lie in [0, 1)");
    const auto tokens = byte_tokens(text);
    const auto cut = tokens.size() - static_cast<std::size_t>(static_cast<double>(tokens.size()) * val_fraction);
    Corpus c;
    c.train.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut));
    c.val.assign(tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end());
    return c;
}

Corpus load_corpus(const std::string& path, double val_fraction) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open corpus");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (text.empty()) throw DataError(path + ": corpus is empty");
    return split_corpus(text, val_fraction);
}

void sample_batch(const std::vector<std::int32_t>& stream, std::size_t batch, std::size_t seq,
                  std::uint64_t seed, std::uint64_t step, std::vector<std::int32_t>& inputs,
                  std::vector<std::int32_t>& targets) {
    if (stream.size() < batch * (seq + 1)) {
        throw DataError("corpus has " + std::to_string(stream.size()) + " training tokens, fewer than one batch (" +
                        std::to_string(batch) + " x " + std::to_string(seq + 1) + ")");
    }
    Rng rng(derive_seed(seed, 0x5A3D1E00ULL + step));
    inputs.resize(batch * seq);
    targets.resize(batch * seq);
    const std::uint64_t span = stream.size() - seq;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto start = static_cast<std::size_t>(rng.below(span));
        for (std::size_t t = 0; t < seq; ++t) {
            inputs[b * seq + t] = stream[start + t];
            targets[b * seq + t] = stream[start + t + 1];
        }
    }
}

namespace {

using Words = std::vector<std::string>;

const Words kNames{"John", "Mary", "Richard", "Elizabeth", "Andrea", "Oprah", "David", "Sarah", "Michael",
                   "Laura", "James", "Anna", "Robert", "Maria", "Thomas", "Helen"};
const Words kTitles{"minister", "secretary", "professor", "commander", "director", "president", "manager",
                    "senator", "winner", "chairman", "CEO", "coach"};
const Words kSpeech{"said", "told", "explained", "asked", "claimed", "announced", "added", "noted", "argued"};
const Words kDiscourse{"However", "Therefore", "Actually", "Indeed", "Meanwhile", "Moreover", "Especially"};
const Words kManner{"quickly", "carefully", "directly", "quietly", "firmly", "properly", "successfully", "clearly"};
const Words kTime{"now", "today", "recently", "always", "sometimes", "currently", "often", "never", "soon"};
const Words kNational{"American", "British", "Chinese", "European", "Japanese", "French", "German", "Indian"};
const Words kDays{"Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"};
const Words kMonths{"January", "March", "April", "June", "July", "September", "October", "December"};
const Words kParts{"morning", "afternoon", "evening", "night", "summer", "winter", "week", "year"};
const Words kPreps{"in", "on", "at", "to", "for", "with", "by", "from", "about", "near", "under", "after"};
const Words kDets{"the", "a", "this", "that", "every", "each", "some"};
const Words kPronouns{"he", "she", "they", "it", "we", "someone"};
const Words kQuant{"all", "many", "most", "several", "few", "both"};
const Words kAdjs{"good", "new", "important", "political", "economic", "public", "small", "large", "local",
                  "strong", "early", "final", "national", "private"};
const Words kNouns{"city", "report", "company", "market", "school", "river", "team", "plan", "house", "road",
                   "project", "group", "village", "office", "garden", "court", "bridge", "station"};
const Words kAbstract{"decision", "agreement", "movement", "question", "development", "government", "kindness",
                      "election", "statement", "tension"};
const Words kAgents{"player", "actor", "worker", "teacher", "farmer", "writer", "driver", "visitor", "builder"};
const Words kPast{"opened", "closed", "visited", "reported", "created", "changed", "finished", "started",
                  "moved", "joined", "crossed", "protected"};
const Words kIng{"running", "building", "planning", "working", "walking", "reading", "writing", "waiting"};
const Words kCommon{"is", "has", "makes", "takes", "knows", "gets", "sees", "gives"};
const Words kPlaces{"London", "Paris", "Tokyo", "Berlin", "Boston", "Chicago", "Madrid", "Sydney"};
const Words kOrdinals{"1st", "2nd", "3rd", "4th", "5th", "10th", "21st"};

class Writer {
public:
    explicit Writer(std::uint64_t seed) : rng_(seed) {}

    // Zipf-like: earlier entries are more frequent.
    const std::string& pick(const Words& w) {
        double total = 0;
        for (std::size_t i = 0; i < w.size(); ++i) total += 1.0 / static_cast<double>(i + 1);
        double u = rng_.uniform() * total;
        for (std::size_t i = 0; i < w.size(); ++i) {
            u -= 1.0 / static_cast<double>(i + 1);
            if (u < 0) return w[i];
        }
        return w.back();
    }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_.below(n)); }
    bool coin(double p) { return rng_.uniform() < p; }

    std::string number() {
        switch (below(3)) {
            case 0: return std::to_string(1900 + below(125));
            case 1: return std::to_string(2 + below(98));
            default: return std::to_string(100 * (1 + below(50)));
        }
    }

    std::string noun_phrase() {
        std::string s = pick(kDets);
        if (coin(0.5)) s += " " + pick(kAdjs);
        return s + " " + pick(kNouns);
    }

    std::string when() {
        switch (below(4)) {
            case 0: return "on " + pick(kDays);
            case 1: return "in " + pick(kMonths) + " " + std::to_string(1950 + below(75));
            case 2: return "in the " + pick(kParts);
            default: return pick(kTime);
        }
    }

    std::string clause() {
        switch (below(4)) {
            case 0: return noun_phrase() + " " + pick(kPast) + " " + pick(kPreps) + " " + noun_phrase();
            case 1: return pick(kPronouns) + " " + pick(kCommon) + " " + pick(kQuant) + " " + pick(kNouns) + "s";
            case 2: return "the " + pick(kAbstract) + " " + pick(kCommon) + " " + pick(kAdjs);
            default: return pick(kPronouns) + " was " + pick(kIng) + " " + pick(kPreps) + " " + pick(kPlaces);
        }
    }

    std::string sentence() {
        std::string s;
        switch (below(8)) {
            case 0: s = capital(clause()) + " " + when() + "."; break;
            case 1: s = "\"" + capital(clause()) + ",\" " + pick(kNames) + " " + pick(kSpeech) + " " + pick(kManner) + "."; break;
            case 2:
                s = pick(kNames) + ", the " + pick(kNational) + " " + pick(kTitles) + ", " + pick(kSpeech) +
                    " that " + clause() + ".";
                break;
            case 3:
                s = "In " + std::to_string(1950 + below(75)) + ", " + number() + " " + pick(kAgents) + "s " +
                    pick(kPast) + " " + pick(kPreps) + " " + pick(kPlaces) + ".";
                break;
            case 4:
                s = pick(kDiscourse) + ", " + pick(kPronouns) + " " + pick(kCommon) + " " + pick(kQuant) + " " +
                    pick(kNouns) + "s " + pick(kPreps) + " the " + pick(kOrdinals) + " " + pick(kNouns) + ".";
                break;
            case 5:
                s = "The " + pick(kAbstract) + " of the " + pick(kAgents) + " " + pick(kPast) + " " +
                    pick(kManner) + " (" + number() + " percent)" + ".";
                break;
            case 6:
                s = capital(pick(kPronouns)) + " asked: " + "\"Is " + noun_phrase() + " " + pick(kAdjs) + "?\"";
                break;
            default:
                s = "The " + pick(kTitles) + " " + pick(kSpeech) + " " + pick(kNames) + "; " + clause() + "!";
                break;
        }
        return s;
    }

    static std::string capital(std::string s) {
        if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
        return s;
    }

private:
    Rng rng_;
};

}  // namespace

std::string synthetic_text(std::size_t bytes, std::uint64_t seed) {
    Writer w(derive_seed(seed, 0xC0FFEEULL));
    std::string out;
    out.reserve(bytes + 512);
    while (out.size() < bytes) {
        const std::size_t sentences = 3 + w.below(6);
        for (std::size_t i = 0; i < sentences; ++i) {
            if (i) out += ' ';
            out += w.sentence();
        }
        out += '\n';
    }
    return out;
}

}  // namespace pathmoe
