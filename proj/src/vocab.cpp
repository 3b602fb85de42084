#include "frspec/vocab.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "frspec/errors.h"

namespace frspec {

void FrequencyTable::merge(const FrequencyTable & other) {
    if (other.vocab_size != vocab_size) {
        throw std::invalid_argument("FrequencyTable::merge: vocab_size mismatch");
    }
    for (int t = 0; t < vocab_size; ++t) counts[t] += other.counts[t];
    total += other.total;
}

FrequencyTable count_frequencies(std::span<const Token> stream, int vocab_size) {
    if (vocab_size < 1) throw std::invalid_argument("count_frequencies: vocab_size must be >= 1");
    FrequencyTable table;
    table.vocab_size = vocab_size;
    table.counts.assign(vocab_size, 0);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const Token t = stream[i];
        if (t < 0 || t >= vocab_size) {
            throw std::invalid_argument("count_frequencies: token id " + std::to_string(t) +
                                        " out of range at offset " + std::to_string(i));
        }
        ++table.counts[t];
    }
    table.total = stream.size();
    return table;
}

namespace {

RankedSubset finalize_subset(std::vector<Token> members, const FrequencyTable * table, int vocab_size) {
    // Order members by count descending (ties ascending id); without counts keep the given order.
    if (table != nullptr) {
        std::sort(members.begin(), members.end(), [&](Token a, Token b) {
            if (table->counts[a] != table->counts[b]) return table->counts[a] > table->counts[b];
            return a < b;
        });
    }
    RankedSubset subset;
    subset.vocab_size = vocab_size;
    subset.ordered_ids = std::move(members);
    subset.full_to_restricted.assign(vocab_size, -1);
    for (int i = 0; i < subset.size(); ++i) {
        subset.full_to_restricted[subset.ordered_ids[i]] = i;
    }
    return subset;
}

void check_forced(std::span<const Token> forced, int vocab_size) {
    for (Token f : forced) {
        if (f < 0 || f >= vocab_size) {
            throw std::invalid_argument("subset: forced id " + std::to_string(f) + " out of range");
        }
    }
}

}  // namespace

RankedSubset build_subset(const FrequencyTable & table, int size, std::span<const Token> forced) {
    if (size < 1 || size > table.vocab_size) {
        throw std::invalid_argument("build_subset: size " + std::to_string(size) + " out of range");
    }
    check_forced(forced, table.vocab_size);

    std::vector<char> is_member(table.vocab_size, 0);
    std::vector<Token> members;
    for (Token f : forced) {
        if (!is_member[f]) {
            is_member[f] = 1;
            members.push_back(f);
        }
    }
    if (static_cast<int>(members.size()) > size) {
        throw std::invalid_argument("build_subset: size smaller than the forced id count");
    }

    std::vector<Token> order(table.vocab_size);
    for (int t = 0; t < table.vocab_size; ++t) order[t] = t;
    std::sort(order.begin(), order.end(), [&](Token a, Token b) {
        if (table.counts[a] != table.counts[b]) return table.counts[a] > table.counts[b];
        return a < b;
    });
    for (Token t : order) {
        if (static_cast<int>(members.size()) >= size) break;
        if (!is_member[t]) {
            is_member[t] = 1;
            members.push_back(t);
        }
    }
    return finalize_subset(std::move(members), &table, table.vocab_size);
}

RankedSubset subset_from_ranking(std::span<const Token> ranked_desc, int size, int vocab_size,
                                 std::span<const Token> forced) {
    if (size < 1 || size > static_cast<int>(ranked_desc.size())) {
        throw std::invalid_argument("subset_from_ranking: size out of range");
    }
    check_forced(forced, vocab_size);
    std::vector<char> seen(vocab_size, 0);
    for (Token t : ranked_desc) {
        if (t < 0 || t >= vocab_size) {
            throw std::invalid_argument("subset_from_ranking: id " + std::to_string(t) + " out of range");
        }
        if (seen[t]) throw std::invalid_argument("subset_from_ranking: duplicate id " + std::to_string(t));
        seen[t] = 1;
    }

    std::vector<Token> members(ranked_desc.begin(), ranked_desc.begin() + size);
    std::vector<char> is_member(vocab_size, 0);
    for (Token t : members) is_member[t] = 1;

    std::vector<Token> missing;
    for (Token f : forced) {
        if (f >= 0 && !is_member[f]) {
            is_member[f] = 1;
            missing.push_back(f);
        }
    }
    if (static_cast<int>(missing.size()) > size) {
        throw std::invalid_argument("subset_from_ranking: size smaller than the forced id count");
    }
    // Missing forced ids evict the lowest-ranked non-forced picks and rank last.
    for (std::size_t i = 0; i < missing.size(); ++i) {
        members[members.size() - 1 - i] = missing[missing.size() - 1 - i];
    }
    return finalize_subset(std::move(members), nullptr, vocab_size);
}

double coverage(const FrequencyTable & table, const RankedSubset & subset) {
    if (subset.vocab_size != table.vocab_size) {
        throw std::invalid_argument("coverage: subset does not match the table vocabulary");
    }
    if (table.total == 0) {
        throw std::domain_error("coverage: undefined for an empty corpus");
    }
    std::uint64_t covered = 0;
    for (Token t : subset.ordered_ids) covered += table.counts[t];
    return static_cast<double>(covered) / static_cast<double>(table.total);
}

RestrictedHead restrict_lm_head(const Matrix & lm_head, std::shared_ptr<const RankedSubset> subset) {
    if (subset == nullptr) throw std::invalid_argument("restrict_lm_head: null subset");
    for (Token t : subset->ordered_ids) {
        if (t < 0 || t >= lm_head.rows) {
            throw std::invalid_argument("restrict_lm_head: id " + std::to_string(t) +
                                        " out of range for the LM head");
        }
    }
    RestrictedHead head;
    head.matrix = Matrix(subset->size(), lm_head.cols);
    for (int i = 0; i < subset->size(); ++i) {
        std::memcpy(head.matrix.row(i), lm_head.row(subset->full_id(i)),
                    sizeof(float) * lm_head.cols);
    }
    head.subset = std::move(subset);
    return head;
}

double flops_ratio(int full_size, int restricted_size) {
    if (full_size < 1 || restricted_size < 1) {
        throw std::invalid_argument("flops_ratio: sizes must be positive");
    }
    if (restricted_size > full_size) {
        throw std::invalid_argument("flops_ratio: restricted size exceeds full size");
    }
    return static_cast<double>(restricted_size) / static_cast<double>(full_size);
}

TokenSequence zipf_tokens(int vocab_size, double exponent, std::size_t count, std::uint64_t seed) {
    if (vocab_size < 1) throw std::invalid_argument("zipf_tokens: vocab_size must be >= 1");
    std::vector<double> cum(vocab_size);
    double acc = 0.0;
    for (int r = 0; r < vocab_size; ++r) {
        acc += std::pow(static_cast<double>(r + 1), -exponent);
        cum[r] = acc;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, acc);
    TokenSequence out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = uni(rng);
        out[i] = static_cast<Token>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    }
    return out;
}

namespace {

constexpr char kStreamMagic[4] = {'F', 'R', 'T', 'K'};
constexpr std::uint32_t kStreamVersion = 1;

void write_u32(std::ofstream & f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char *>(b), 4);
}

void write_u64(std::ofstream & f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char *>(b), 8);
}

std::uint32_t read_u32(std::ifstream & f, const std::string & path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char *>(b), 4)) throw DataError(path + ": truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::ifstream & f, const std::string & path) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char *>(b), 8)) throw DataError(path + ": truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_token_stream(const std::string & path, int vocab_size, std::span<const Token> tokens) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write(kStreamMagic, 4);
    write_u32(f, kStreamVersion);
    write_u32(f, static_cast<std::uint32_t>(vocab_size));
    write_u64(f, tokens.size());
    for (Token t : tokens) write_u32(f, static_cast<std::uint32_t>(t));
    if (!f) throw DataError(path + ": write failed");
}

TokenStreamData read_token_stream(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open");
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kStreamMagic, 4) != 0) {
        throw DataError(path + ": not a token-stream file (bad magic)");
    }
    const std::uint32_t version = read_u32(f, path);
    if (version != kStreamVersion) {
        throw DataError(path + ": unsupported version " + std::to_string(version));
    }
    TokenStreamData data;
    data.vocab_size = static_cast<int>(read_u32(f, path));
    if (data.vocab_size < 1) throw DataError(path + ": bad vocab_size");
    const std::uint64_t count = read_u64(f, path);
    data.tokens.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t raw = read_u32(f, path);
        if (raw >= static_cast<std::uint32_t>(data.vocab_size)) {
            throw DataError(path + ": token id " + std::to_string(raw) + " out of range at offset " +
                            std::to_string(i));
        }
        data.tokens[i] = static_cast<Token>(raw);
    }
    return data;
}

TokenStreamData read_token_stream_text(const std::string & path, int vocab_size) {
    std::ifstream f(path);
    if (!f) throw DataError(path + ": cannot open");
    TokenStreamData data;
    data.vocab_size = vocab_size;
    long long value = 0;
    std::size_t offset = 0;
    while (f >> value) {
        if (value < 0 || value >= vocab_size) {
            throw DataError(path + ": token id " + std::to_string(value) + " out of range at offset " +
                            std::to_string(offset));
        }
        data.tokens.push_back(static_cast<Token>(value));
        ++offset;
    }
    if (!f.eof()) throw DataError(path + ": unparsable token id at offset " + std::to_string(offset));
    return data;
}

void write_ranked_file(const std::string & path, std::span<const Token> ordered_ids) {
    std::ofstream f(path);
    if (!f) throw DataError(path + ": cannot open for writing");
    for (Token t : ordered_ids) f << t << '\n';
    if (!f) throw DataError(path + ": write failed");
}

std::vector<Token> read_ranked_file(const std::string & path) {
    std::ifstream f(path);
    if (!f) throw DataError(path + ": cannot open");
    std::vector<Token> ids;
    long long value = 0;
    while (f >> value) {
        if (value < 0) throw DataError(path + ": negative token id");
        ids.push_back(static_cast<Token>(value));
    }
    if (!f.eof()) throw DataError(path + ": unparsable token id at line " + std::to_string(ids.size() + 1));
    return ids;
}

}  // namespace frspec
