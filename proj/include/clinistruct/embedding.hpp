#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clinistruct::embedding {

enum class TrainMode : std::uint32_t { ExactSoftmax = 0, NegativeSampling = 1 };

std::string_view to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view s);

struct TrainConfig {
    std::size_t window = 5;
    std::size_t dim = 200;
    int epochs = 15;
    double learning_rate = 0.025;  // decays linearly to lr * 1e-4
    TrainMode mode = TrainMode::ExactSoftmax;
    std::size_t negatives = 5;
    std::uint64_t seed = 1;
    std::uint64_t min_count = 2;
    unsigned threads = 1;  // > 1: unsynchronized data-parallel updates, not reproducible

    void validate() const;
};

// Skip-gram parameters. The input matrix holds one row per word (the word's
// representation). The output matrix is conceptually d x |V|; it is stored
// here as one row per word for locality and transposed on save.
class EmbeddingModel {
public:
    EmbeddingModel() = default;
    EmbeddingModel(std::vector<std::string> vocab, std::size_t dim);

    std::size_t vocab_size() const { return vocab_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::string& word(std::size_t i) const { return vocab_.at(i); }
    std::optional<std::size_t> index(std::string_view token) const;
    std::size_t require_index(std::string_view token) const;  // throws NotFound naming the token

    std::span<double> input(std::size_t word) { return {input_.data() + word * dim_, dim_}; }
    std::span<const double> input(std::size_t word) const { return {input_.data() + word * dim_, dim_}; }
    std::span<double> output(std::size_t word) { return {output_.data() + word * dim_, dim_}; }
    std::span<const double> output(std::size_t word) const { return {output_.data() + word * dim_, dim_}; }

    std::vector<double>& input_matrix() { return input_; }
    const std::vector<double>& input_matrix() const { return input_; }
    std::vector<double>& output_matrix() { return output_; }
    const std::vector<double>& output_matrix() const { return output_; }

    TrainMode mode = TrainMode::ExactSoftmax;
    std::size_t negatives = 0;
    std::uint64_t seed = 0;

    bool operator==(const EmbeddingModel&) const = default;

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
    std::vector<double> input_;
    std::vector<double> output_;
};

// p(context | center) under the full softmax.
double context_probability(const EmbeddingModel& model, std::string_view center, std::string_view context);

// Full distribution p(. | center).
std::vector<double> softmax_row(const EmbeddingModel& model, std::size_t center);

using IndexPair = std::pair<std::size_t, std::size_t>;  // (center, context)

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad_input;   // same layout as input_matrix()
    std::vector<double> grad_output;  // same layout as output_matrix()
};

// Negative average log-probability of the pairs and its exact gradient.
LossGradient loss_and_gradient(const EmbeddingModel& model, std::span<const IndexPair> pairs);

// Average negative log-probability over the (center, context) pairs of a
// tokenized corpus, exact softmax.
double corpus_loss(const EmbeddingModel& model, std::span<const std::vector<std::string>> corpus, std::size_t window);

// One exact-softmax SGD step on all pairs that share `center`. Returns the
// summed negative log-probability of those pairs before the update.
double softmax_step(EmbeddingModel& model, std::size_t center, std::span<const std::size_t> contexts, double lr,
                    std::vector<double>& scratch);

struct TrainReport {
    std::vector<double> epoch_loss;  // running average loss over each epoch's pairs
    std::uint64_t pairs_per_epoch = 0;
};

using EpochCallback = std::function<void(int epoch, const EmbeddingModel&)>;

EmbeddingModel train_skip_gram(std::span<const std::vector<std::string>> corpus, const TrainConfig& cfg,
                               TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

struct Neighbor {
    std::string token;
    double similarity = 0.0;

    bool operator==(const Neighbor&) const = default;
};

struct NeighborResult {
    std::vector<Neighbor> neighbors;
    std::optional<std::string> warning;
};

double cosine(std::span<const double> a, std::span<const double> b);

// Top-k input rows by cosine similarity, query excluded; ties broken by token.
NeighborResult nearest_neighbors(const EmbeddingModel& model, std::string_view term, std::size_t k);

// Binary layout (little-endian): magic "CSEMB001", u32 |V|, u32 d, u32 mode,
// u32 negatives, u64 seed, u32 provenance length + bytes, vocab as (u32 length
// + bytes), input matrix |V| x d f32 row-major, output matrix d x |V| f32
// row-major.
void save_binary(const EmbeddingModel& model, const std::filesystem::path& p, std::string_view provenance = {});
EmbeddingModel load_binary(const std::filesystem::path& p);
// "<|V|> <d>" then one line per word: token followed by d reals.
void save_text(const EmbeddingModel& model, const std::filesystem::path& p);

}  // namespace clinistruct::embedding
