#include <cstring>

#include "textclass/tokenize.hpp"

// Porter's 1980 suffix-stripping algorithm, steps 1a-5b. The rule tables
// below are the published ones: step 2 carries ABLI -> ABLE and there is
// no LOGI rule (both were altered in later revisions of the algorithm).

namespace textclass::tokenize {

namespace {

bool is_cons(const std::string& w, size_t i) {
    switch (w[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u':
            return false;
        case 'y':
            return i == 0 ? true : !is_cons(w, i - 1);
        default:
            return true;
    }
}

// m in the [C](VC)^m[V] decomposition of the prefix w[0..n).
int measure(const std::string& w, size_t n) {
    size_t i = 0;
    int m = 0;
    while (i < n && is_cons(w, i)) ++i;
    while (i < n) {
        while (i < n && !is_cons(w, i)) ++i;
        if (i >= n) break;
        ++m;
        while (i < n && is_cons(w, i)) ++i;
    }
    return m;
}

bool has_vowel(const std::string& w, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!is_cons(w, i)) return true;
    return false;
}

bool double_cons(const std::string& w, size_t n) {
    return n >= 2 && w[n - 1] == w[n - 2] && is_cons(w, n - 1);
}

// *o: prefix w[0..n) ends consonant-vowel-consonant, last not w/x/y.
bool ends_cvc(const std::string& w, size_t n) {
    if (n < 3 || !is_cons(w, n - 3) || is_cons(w, n - 2) || !is_cons(w, n - 1)) return false;
    char c = w[n - 1];
    return c != 'w' && c != 'x' && c != 'y';
}

struct Rule {
    const char* s1;
    const char* s2;
};

// Index of the rule with the longest matching s1 (the only one a step may
// apply), or -1 when none matches.
template <size_t N>
int match(const std::string& w, const Rule (&rules)[N]) {
    int best = -1;
    size_t best_len = 0;
    for (size_t i = 0; i < N; ++i) {
        size_t len = std::strlen(rules[i].s1);
        if (len > best_len && w.size() >= len &&
            w.compare(w.size() - len, len, rules[i].s1) == 0) {
            best = static_cast<int>(i);
            best_len = len;
        }
    }
    return best;
}

void apply(std::string& w, const Rule& r) {
    w.resize(w.size() - std::strlen(r.s1));
    w += r.s2;
}

const Rule kStep1a[] = {{"sses", "ss"}, {"ies", "i"}, {"ss", "ss"}, {"s", ""}};
const Rule kStep1b[] = {{"eed", "ee"}, {"ed", ""}, {"ing", ""}};
const Rule kStep1bTidy[] = {{"at", "ate"}, {"bl", "ble"}, {"iz", "ize"}};
const Rule kStep2[] = {
    {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
    {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
    {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
    {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
    {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
const Rule kStep3[] = {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
                       {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
const Rule kStep4[] = {{"al", ""},    {"ance", ""}, {"ence", ""},  {"er", ""},
                       {"ic", ""},    {"able", ""}, {"ible", ""},  {"ant", ""},
                       {"ement", ""}, {"ment", ""}, {"ent", ""},   {"ion", ""},
                       {"ou", ""},    {"ism", ""},  {"ate", ""},   {"iti", ""},
                       {"ous", ""},   {"ive", ""},  {"ize", ""}};

}  // namespace

std::string porter_stem(const std::string& word) {
    if (word.size() <= 2) return word;
    for (char c : word)
        if (c < 'a' || c > 'z') return word;
    std::string w = word;

    // step 1a
    if (int r = match(w, kStep1a); r >= 0) apply(w, kStep1a[r]);

    // step 1b, with its tidy-up when ed/ing came off
    if (int r = match(w, kStep1b); r >= 0) {
        size_t stem = w.size() - std::strlen(kStep1b[r].s1);
        if (r == 0) {
            if (measure(w, stem) > 0) apply(w, kStep1b[0]);
        } else if (has_vowel(w, stem)) {
            w.resize(stem);
            if (int r2 = match(w, kStep1bTidy); r2 >= 0) {
                apply(w, kStep1bTidy[r2]);
            } else if (double_cons(w, w.size()) && w.back() != 'l' && w.back() != 's' &&
                       w.back() != 'z') {
                w.pop_back();
            } else if (measure(w, w.size()) == 1 && ends_cvc(w, w.size())) {
                w += 'e';
            }
        }
    }
    if (w.empty()) return w;

    // step 1c
    if (w.back() == 'y' && has_vowel(w, w.size() - 1)) w.back() = 'i';

    // step 2
    if (int r = match(w, kStep2); r >= 0) {
        size_t stem = w.size() - std::strlen(kStep2[r].s1);
        if (measure(w, stem) > 0) apply(w, kStep2[r]);
    }

    // step 3
    if (int r = match(w, kStep3); r >= 0) {
        size_t stem = w.size() - std::strlen(kStep3[r].s1);
        if (measure(w, stem) > 0) apply(w, kStep3[r]);
    }

    // step 4 ('ion' additionally needs a stem ending s or t)
    if (int r = match(w, kStep4); r >= 0) {
        size_t stem = w.size() - std::strlen(kStep4[r].s1);
        bool ok = measure(w, stem) > 1;
        if (ok && std::strcmp(kStep4[r].s1, "ion") == 0)
            ok = stem > 0 && (w[stem - 1] == 's' || w[stem - 1] == 't');
        if (ok) w.resize(stem);
    }
    if (w.empty()) return w;

    // step 5a
    if (w.back() == 'e') {
        size_t stem = w.size() - 1;
        int m = measure(w, stem);
        if (m > 1 || (m == 1 && !ends_cvc(w, stem))) w.pop_back();
    }

    // step 5b
    if (!w.empty() && w.back() == 'l' && double_cons(w, w.size()) && measure(w, w.size()) > 1)
        w.pop_back();

    return w;
}

}  // namespace textclass::tokenize
