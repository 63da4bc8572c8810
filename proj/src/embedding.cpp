#include "clinistruct/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "clinistruct/common.hpp"
#include "clinistruct/io.hpp"

namespace clinistruct::embedding {

std::string_view to_string(TrainMode m) {
    return m == TrainMode::ExactSoftmax ? "exact_softmax" : "negative_sampling";
}

TrainMode parse_train_mode(std::string_view s) {
    if (s == "exact_softmax") return TrainMode::ExactSoftmax;
    if (s == "negative_sampling") return TrainMode::NegativeSampling;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown training mode '{}'", s));
}

void TrainConfig::validate() const {
    if (window < 1) throw Error(ErrorCode::InvalidArgument, "train config: window must be >= 1");
    if (dim < 1) throw Error(ErrorCode::InvalidArgument, "train config: dim must be >= 1");
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "train config: epochs must be >= 1");
    if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "train config: learning_rate must be > 0");
    if (mode == TrainMode::NegativeSampling && negatives < 1)
        throw Error(ErrorCode::InvalidArgument, "train config: negatives must be >= 1");
}

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocab, std::size_t dim)
    : vocab_(std::move(vocab)), dim_(dim), input_(vocab_.size() * dim, 0.0), output_(vocab_.size() * dim, 0.0) {
    if (dim_ < 1) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
    for (std::size_t i = 0; i < vocab_.size(); ++i)
        if (!index_.emplace(vocab_[i], i).second)
            throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate vocabulary entry '{}'", vocab_[i]));
}

std::optional<std::size_t> EmbeddingModel::index(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingModel::require_index(std::string_view token) const {
    auto i = index(token);
    if (!i) throw Error(ErrorCode::NotFound, fmt::format("token '{}' is not in the vocabulary", token));
    return *i;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Fills `probs` with p(. | center); returns log of the partition function.
double softmax_into(const EmbeddingModel& model, std::size_t center, std::vector<double>& probs) {
    const auto h = model.input(center);
    const std::size_t n = model.vocab_size();
    probs.resize(n);
    double max_score = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
        probs[j] = dot(model.output(j), h);
        max_score = std::max(max_score, probs[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        probs[j] = std::exp(probs[j] - max_score);
        z += probs[j];
    }
    for (auto& p : probs) p /= z;
    return max_score + std::log(z);
}

}  // namespace

std::vector<double> softmax_row(const EmbeddingModel& model, std::size_t center) {
    std::vector<double> probs;
    softmax_into(model, center, probs);
    return probs;
}

double context_probability(const EmbeddingModel& model, std::string_view center, std::string_view context) {
    auto c = model.require_index(center);
    auto o = model.require_index(context);
    return softmax_row(model, c)[o];
}

LossGradient loss_and_gradient(const EmbeddingModel& model, std::span<const IndexPair> pairs) {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "loss_and_gradient: empty pair list");
    const std::size_t n = model.vocab_size(), d = model.dim();
    LossGradient g;
    g.grad_input.assign(n * d, 0.0);
    g.grad_output.assign(n * d, 0.0);
    std::vector<double> probs;
    const double scale = 1.0 / static_cast<double>(pairs.size());
    for (const auto& [center, context] : pairs) {
        if (center >= n || context >= n) throw Error(ErrorCode::InvalidArgument, "loss_and_gradient: index out of range");
        softmax_into(model, center, probs);
        g.loss -= std::log(probs[context]) * scale;
        const auto h = model.input(center);
        double* gh = g.grad_input.data() + center * d;
        for (std::size_t j = 0; j < n; ++j) {
            // d(-log p_context)/d score_j = p_j - [j == context]
            double e = (probs[j] - (j == context ? 1.0 : 0.0)) * scale;
            const auto out = model.output(j);
            double* go = g.grad_output.data() + j * d;
            for (std::size_t k = 0; k < d; ++k) {
                gh[k] += e * out[k];
                go[k] += e * h[k];
            }
        }
    }
    return g;
}

double softmax_step(EmbeddingModel& model, std::size_t center, std::span<const std::size_t> contexts, double lr,
                    std::vector<double>& scratch) {
    const std::size_t n = model.vocab_size(), d = model.dim();
    softmax_into(model, center, scratch);
    double loss = 0.0;
    const double m = static_cast<double>(contexts.size());
    for (auto c : contexts) loss -= std::log(scratch[c]);
    for (auto& p : scratch) p *= m;
    for (auto c : contexts) scratch[c] -= 1.0;

    auto h = model.input(center);
    std::vector<double> grad_h(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double e = scratch[j];
        auto out = model.output(j);
        for (std::size_t k = 0; k < d; ++k) {
            grad_h[k] += e * out[k];
            out[k] -= lr * e * h[k];
        }
    }
    for (std::size_t k = 0; k < d; ++k) h[k] -= lr * grad_h[k];
    return loss;
}

namespace {

struct Prepared {
    std::vector<std::string> vocab;
    std::vector<std::uint64_t> counts;
    std::vector<std::vector<std::size_t>> docs;
};

Prepared prepare(std::span<const std::vector<std::string>> corpus, std::uint64_t min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& doc : corpus)
        for (const auto& t : doc) ++counts[t];
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [w, c] : counts)
        if (c >= min_count) kept.emplace_back(w, c);
    // most frequent first, ties by token
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Prepared p;
    std::unordered_map<std::string, std::size_t> idx;
    for (auto& [w, c] : kept) {
        idx.emplace(w, p.vocab.size());
        p.vocab.push_back(w);
        p.counts.push_back(c);
    }
    for (const auto& doc : corpus) {
        std::vector<std::size_t> ids;
        for (const auto& t : doc)
            if (auto it = idx.find(t); it != idx.end()) ids.push_back(it->second);
        if (ids.size() > 1) p.docs.push_back(std::move(ids));
    }
    return p;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

class NoiseTable {
public:
    explicit NoiseTable(const std::vector<std::uint64_t>& counts) {
        cumulative_.reserve(counts.size());
        double acc = 0.0;
        for (auto c : counts) {
            acc += std::pow(static_cast<double>(c), 0.75);
            cumulative_.push_back(acc);
        }
    }
    std::size_t sample(std::mt19937_64& rng) const {
        double r = uniform01(rng) * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
    }

private:
    std::vector<double> cumulative_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Returns the negative log-likelihood of the positive pair (diagnostic only).
double negative_sampling_step(EmbeddingModel& model, std::size_t center, std::size_t context, double lr,
                              const NoiseTable& noise, std::size_t k, std::mt19937_64& rng,
                              std::vector<double>& grad_h) {
    const std::size_t d = model.dim();
    auto h = model.input(center);
    std::fill(grad_h.begin(), grad_h.end(), 0.0);
    double nll = 0.0;
    for (std::size_t s = 0; s <= k; ++s) {
        std::size_t target = context;
        double label = 1.0;
        if (s > 0) {
            target = noise.sample(rng);
            if (target == context) continue;
            label = 0.0;
        }
        auto out = model.output(target);
        double f = sigmoid(dot(out, h));
        if (s == 0) nll = -std::log(std::max(f, 1e-300));
        double g = (label - f) * lr;
        for (std::size_t q = 0; q < d; ++q) {
            grad_h[q] += g * out[q];
            out[q] += g * h[q];
        }
    }
    for (std::size_t q = 0; q < d; ++q) h[q] += grad_h[q];
    return nll;
}

}  // namespace

double corpus_loss(const EmbeddingModel& model, std::span<const std::vector<std::string>> corpus, std::size_t window) {
    double total = 0.0;
    std::uint64_t pairs = 0;
    std::vector<double> probs;
    for (const auto& doc : corpus) {
        std::vector<std::size_t> ids;
        for (const auto& t : doc)
            if (auto i = model.index(t)) ids.push_back(*i);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            softmax_into(model, ids[t], probs);
            std::size_t lo = t >= window ? t - window : 0, hi = std::min(ids.size() - 1, t + window);
            for (std::size_t j = lo; j <= hi; ++j) {
                if (j == t) continue;
                total -= std::log(probs[ids[j]]);
                ++pairs;
            }
        }
    }
    return pairs ? total / static_cast<double>(pairs) : 0.0;
}

EmbeddingModel train_skip_gram(std::span<const std::vector<std::string>> corpus, const TrainConfig& cfg,
                               TrainReport* report, const EpochCallback& on_epoch) {
    cfg.validate();
    auto prep = prepare(corpus, cfg.min_count);
    if (prep.vocab.empty())
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("vocabulary is empty after applying min_count {}", cfg.min_count));

    EmbeddingModel model(prep.vocab, cfg.dim);
    model.mode = cfg.mode;
    model.negatives = cfg.mode == TrainMode::NegativeSampling ? cfg.negatives : 0;
    model.seed = cfg.seed;
    {
        std::mt19937_64 rng(cfg.seed);
        const double half = 0.5 / static_cast<double>(cfg.dim);
        for (auto& w : model.input_matrix()) w = (uniform01(rng) * 2.0 - 1.0) * half;
    }

    std::uint64_t pairs_per_epoch = 0;
    for (const auto& doc : prep.docs)
        for (std::size_t t = 0; t < doc.size(); ++t) {
            std::size_t lo = t >= cfg.window ? t - cfg.window : 0, hi = std::min(doc.size() - 1, t + cfg.window);
            pairs_per_epoch += hi - lo;
        }
    const double total_pairs = static_cast<double>(pairs_per_epoch) * cfg.epochs;
    NoiseTable noise(prep.counts);
    if (report) {
        report->epoch_loss.clear();
        report->pairs_per_epoch = pairs_per_epoch;
    }

    auto run_docs = [&](std::size_t begin, std::size_t end, int epoch, std::atomic<std::uint64_t>& done,
                        std::mt19937_64& rng, double& loss_sum) {
        std::vector<double> scratch(model.vocab_size());
        std::vector<double> grad_h(cfg.dim);
        std::vector<std::size_t> contexts;
        for (std::size_t di = begin; di < end; ++di) {
            const auto& doc = prep.docs[di];
            for (std::size_t t = 0; t < doc.size(); ++t) {
                double progress = (static_cast<double>(epoch) * pairs_per_epoch + done.load(std::memory_order_relaxed)) /
                                  std::max(total_pairs, 1.0);
                double lr = cfg.learning_rate * std::max(1e-4, 1.0 - progress);
                std::size_t lo = t >= cfg.window ? t - cfg.window : 0, hi = std::min(doc.size() - 1, t + cfg.window);
                contexts.clear();
                for (std::size_t j = lo; j <= hi; ++j)
                    if (j != t) contexts.push_back(doc[j]);
                if (cfg.mode == TrainMode::ExactSoftmax) {
                    loss_sum += softmax_step(model, doc[t], contexts, lr, scratch);
                } else {
                    for (auto c : contexts)
                        loss_sum += negative_sampling_step(model, doc[t], c, lr, noise, cfg.negatives, rng, grad_h);
                }
                done.fetch_add(contexts.size(), std::memory_order_relaxed);
            }
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::atomic<std::uint64_t> done{0};
        double loss = 0.0;
        if (cfg.threads <= 1) {
            std::mt19937_64 rng(cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
            run_docs(0, prep.docs.size(), epoch, done, rng, loss);
        } else {
            // Hogwild-style: workers update the shared matrices without locks.
            std::vector<double> losses(cfg.threads, 0.0);
            std::vector<std::jthread> pool;
            std::size_t chunk = (prep.docs.size() + cfg.threads - 1) / cfg.threads;
            for (unsigned w = 0; w < cfg.threads; ++w) {
                std::size_t b = w * chunk, e = std::min(prep.docs.size(), b + chunk);
                if (b >= e) break;
                pool.emplace_back([&, b, e, w] {
                    std::mt19937_64 rng(cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch) * 7919ull + w);
                    run_docs(b, e, epoch, done, rng, losses[w]);
                });
            }
            pool.clear();
            for (double l : losses) loss += l;
        }
        if (report) report->epoch_loss.push_back(pairs_per_epoch ? loss / static_cast<double>(pairs_per_epoch) : 0.0);
        if (on_epoch) on_epoch(epoch, model);
    }
    return model;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

NeighborResult nearest_neighbors(const EmbeddingModel& model, std::string_view term, std::size_t k) {
    NeighborResult r;
    auto q = model.index(term);
    if (!q) {
        r.warning = fmt::format("'{}' is out of vocabulary", term);
        return r;
    }
    if (k == 0) return r;
    std::vector<Neighbor> all;
    all.reserve(model.vocab_size());
    const auto qv = model.input(*q);
    for (std::size_t i = 0; i < model.vocab_size(); ++i) {
        if (i == *q) continue;
        all.push_back({model.word(i), cosine(qv, model.input(i))});
    }
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.token < b.token;
    };
    auto top = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(), cmp);
    all.resize(top);
    r.neighbors = std::move(all);
    return r;
}

namespace {

void put_u32(std::ostream& o, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    o.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& o, std::uint64_t v) {
    put_u32(o, static_cast<std::uint32_t>(v));
    put_u32(o, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& o, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(o, bits);
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data_[pos_ + i]);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double f32() {
        std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw Error(ErrorCode::Parse, "model file is truncated");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'C', 'S', 'E', 'M', 'B', '0', '0', '1'};

}  // namespace

void save_binary(const EmbeddingModel& model, const std::filesystem::path& p, std::string_view provenance) {
    io::AtomicFile file(p);
    auto& o = file.stream();
    o.write(kMagic, 8);
    put_u32(o, static_cast<std::uint32_t>(model.vocab_size()));
    put_u32(o, static_cast<std::uint32_t>(model.dim()));
    put_u32(o, static_cast<std::uint32_t>(model.mode));
    put_u32(o, static_cast<std::uint32_t>(model.negatives));
    put_u64(o, model.seed);
    put_u32(o, static_cast<std::uint32_t>(provenance.size()));
    o.write(provenance.data(), static_cast<std::streamsize>(provenance.size()));
    for (const auto& w : model.vocab()) {
        put_u32(o, static_cast<std::uint32_t>(w.size()));
        o.write(w.data(), static_cast<std::streamsize>(w.size()));
    }
    for (double v : model.input_matrix()) put_f32(o, v);
    const std::size_t n = model.vocab_size(), d = model.dim();
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < n; ++j) put_f32(o, model.output(j)[k]);
    file.commit();
}

EmbeddingModel load_binary(const std::filesystem::path& p) {
    Reader r(io::read_file(p));
    if (r.bytes(8) != std::string(kMagic, 8))
        throw Error(ErrorCode::Parse, fmt::format("'{}' is not an embedding model file", p.string()));
    std::size_t n = r.u32(), d = r.u32();
    auto mode = r.u32();
    if (mode > 1) throw Error(ErrorCode::Parse, "model file has an unknown training mode");
    std::size_t negatives = r.u32();
    auto seed = r.u64();
    r.bytes(r.u32());
    std::vector<std::string> vocab;
    vocab.reserve(n);
    for (std::size_t i = 0; i < n; ++i) vocab.push_back(r.bytes(r.u32()));
    EmbeddingModel m(std::move(vocab), d);
    m.mode = static_cast<TrainMode>(mode);
    m.negatives = negatives;
    m.seed = seed;
    for (auto& v : m.input_matrix()) v = r.f32();
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < n; ++j) m.output(j)[k] = r.f32();
    if (!r.at_end()) throw Error(ErrorCode::Parse, "model file has trailing bytes");
    return m;
}

void save_text(const EmbeddingModel& model, const std::filesystem::path& p) {
    io::AtomicFile file(p);
    auto& o = file.stream();
    o << model.vocab_size() << ' ' << model.dim() << '\n';
    for (std::size_t i = 0; i < model.vocab_size(); ++i) {
        o << model.word(i);
        for (double v : model.input(i)) o << ' ' << fmt::format("{:.6g}", static_cast<float>(v));
        o << '\n';
    }
    file.commit();
}

}  // namespace clinistruct::embedding
