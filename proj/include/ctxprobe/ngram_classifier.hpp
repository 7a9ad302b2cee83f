#pragma once
// Bag-of-word-n-grams linear classifier in the style of fastText's supervised
// mode: the document vector is the mean of hashed n-gram embeddings, scored by
// a linear output layer under softmax cross-entropy, trained with plain SGD and
// a learning rate decaying linearly to zero.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ctxprobe/core_data.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/random.hpp"
#include "ctxprobe/text.hpp"

namespace ctxprobe {

struct NgramHyperparams {
    unsigned max_n = 4;
    unsigned epochs = 5;
    double learning_rate = 0.1;
    unsigned embedding_dim = 100;
    std::uint64_t bucket_count = 2'000'000;
    std::uint64_t seed = 0;
    // workers > 1 runs lock-free parallel SGD; parameters then depend on
    // thread scheduling and are no longer reproducible.
    unsigned workers = 1;

    void validate() const {
        if (max_n < 1) throw UsageError("max_n must be >= 1");
        if (epochs < 1) throw UsageError("epochs must be >= 1");
        if (!(learning_rate > 0) || !std::isfinite(learning_rate))
            throw UsageError("learning_rate must be positive");
        if (embedding_dim < 1) throw UsageError("embedding_dim must be >= 1");
        if (bucket_count < 1 || bucket_count > UINT32_MAX)
            throw UsageError("bucket_count must be in [1, 2^32)");
        if (workers < 1) throw UsageError("workers must be >= 1");
    }

    bool operator==(const NgramHyperparams&) const = default;
};

struct LabeledText {
    std::string text;
    Label label = Label::entailment;
};

// Text fed to the lexical model for an instance and view. The full view joins
// context and target with a single space.
inline std::string bow_text(const Instance& in, InputView view, const DecomposeOptions& opt = {}) {
    auto pair = render_view(in, view, opt);
    if (pair.first.empty()) return pair.second;
    return pair.first + " " + pair.second;
}

struct LabelDistribution {
    std::vector<double> probs;  // canonical label order
    Label predicted = Label::entailment;
};

// argmax with ties broken toward the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    double mx = *std::max_element(p.begin(), p.end());
    double z = 0;
    for (double& x : p) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : p) x /= z;
    return p;
}

class NgramModel {
public:
    NgramModel(const NgramHyperparams& hp, Task task) : hp_(hp), task_(task) {
        hp_.validate();
        const std::size_t dim = hp_.embedding_dim;
        input_.resize(static_cast<std::size_t>(hp_.bucket_count) * dim);
        output_.assign(label_arity(task) * dim, 0.0f);
        Rng rng(hp_.seed);
        const double bound = 1.0 / static_cast<double>(dim);
        for (float& w : input_) w = static_cast<float>(rng.uniform(-bound, bound));
    }

    const NgramHyperparams& hyperparams() const noexcept { return hp_; }
    Task task() const noexcept { return task_; }
    std::size_t num_labels() const noexcept { return label_arity(task_); }
    std::span<const float> input_weights() const noexcept { return input_; }
    std::span<const float> output_weights() const noexcept { return output_; }

    std::vector<std::uint32_t> features(std::string_view text) const {
        return featurize(text, hp_.max_n, hp_.bucket_count);
    }

    // Mean of the feature embeddings; zero vector for no features.
    std::vector<double> hidden(std::span<const std::uint32_t> feats) const {
        const std::size_t dim = hp_.embedding_dim;
        std::vector<double> h(dim, 0.0);
        if (feats.empty()) return h;
        for (std::uint32_t f : feats) {
            const float* row = &input_[static_cast<std::size_t>(f) * dim];
            for (std::size_t d = 0; d < dim; ++d) h[d] += row[d];
        }
        const double inv = 1.0 / static_cast<double>(feats.size());
        for (double& x : h) x *= inv;
        return h;
    }

    std::vector<double> logits(std::span<const std::uint32_t> feats) const {
        auto h = hidden(feats);
        const std::size_t dim = hp_.embedding_dim;
        std::vector<double> s(num_labels(), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            const float* row = &output_[i * dim];
            for (std::size_t d = 0; d < dim; ++d) s[i] += row[d] * h[d];
        }
        return s;
    }

    std::vector<double> logits(std::string_view text) const { return logits(features(text)); }

    LabelDistribution predict_features(std::span<const std::uint32_t> feats) const {
        auto s = logits(feats);
        LabelDistribution out;
        out.probs = softmax(s);
        out.predicted = label_at(task_, argmax(out.probs));
        return out;
    }

    LabelDistribution predict(std::string_view text) const { return predict_features(features(text)); }

    bool operator==(const NgramModel& o) const {
        return hp_ == o.hp_ && task_ == o.task_ && input_ == o.input_ && output_ == o.output_;
    }

    // Binary container, little-endian:
    //   "CTXPNGRM" u32 version
    //   u32 max_n, u32 epochs, f64 learning_rate, u32 embedding_dim,
    //   u64 bucket_count, u64 seed, u32 workers
    //   u8 task, u32 num_labels, u8[num_labels] canonical label indices
    //   f32[bucket_count * dim] input, f32[num_labels * dim] output
    void save(std::ostream& os) const {
        os.write(kMagic, 8);
        put<std::uint32_t>(os, kVersion);
        put<std::uint32_t>(os, hp_.max_n);
        put<std::uint32_t>(os, hp_.epochs);
        put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(hp_.learning_rate));
        put<std::uint32_t>(os, hp_.embedding_dim);
        put<std::uint64_t>(os, hp_.bucket_count);
        put<std::uint64_t>(os, hp_.seed);
        put<std::uint32_t>(os, hp_.workers);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(task_));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(num_labels()));
        for (Label l : labels_of(task_)) put<std::uint8_t>(os, static_cast<std::uint8_t>(label_index(l)));
        put_floats(os, input_);
        put_floats(os, output_);
        if (!os) throw DataError("failed writing n-gram model");
    }

    static NgramModel load(std::istream& is) {
        char magic[8];
        is.read(magic, 8);
        if (!is || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not an n-gram model file");
        if (get<std::uint32_t>(is) != kVersion) throw DataError("unsupported n-gram model version");
        NgramHyperparams hp;
        hp.max_n = get<std::uint32_t>(is);
        hp.epochs = get<std::uint32_t>(is);
        hp.learning_rate = std::bit_cast<double>(get<std::uint64_t>(is));
        hp.embedding_dim = get<std::uint32_t>(is);
        hp.bucket_count = get<std::uint64_t>(is);
        hp.seed = get<std::uint64_t>(is);
        hp.workers = get<std::uint32_t>(is);
        auto task_byte = get<std::uint8_t>(is);
        if (task_byte > 1) throw DataError("corrupt n-gram model: task");
        Task task = static_cast<Task>(task_byte);
        if (get<std::uint32_t>(is) != label_arity(task)) throw DataError("corrupt n-gram model: labels");
        for (std::size_t i = 0; i < label_arity(task); ++i)
            if (get<std::uint8_t>(is) != i) throw DataError("n-gram model label order is not canonical");
        hp.validate();
        NgramModel m(hp, task, Uninitialized{});
        get_floats(is, m.input_);
        get_floats(is, m.output_);
        for (float w : m.output_)
            if (!std::isfinite(w)) throw DataError("n-gram model has non-finite weights");
        return m;
    }

private:
    struct Uninitialized {};
    NgramModel(const NgramHyperparams& hp, Task task, Uninitialized)
        : hp_(hp),
          task_(task),
          input_(static_cast<std::size_t>(hp.bucket_count) * hp.embedding_dim),
          output_(label_arity(task) * hp.embedding_dim) {}

    static constexpr char kMagic[8] = {'C', 'T', 'X', 'P', 'N', 'G', 'R', 'M'};
    static constexpr std::uint32_t kVersion = 1;

    template <typename T>
    static void put(std::ostream& os, T v) {
        unsigned char b[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), sizeof(T));
    }

    template <typename T>
    static T get(std::istream& is) {
        unsigned char b[sizeof(T)];
        is.read(reinterpret_cast<char*>(b), sizeof(T));
        if (!is) throw DataError("truncated n-gram model file");
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
        return v;
    }

    static void put_floats(std::ostream& os, const std::vector<float>& v) {
        if constexpr (std::endian::native == std::endian::little) {
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(v.size() * sizeof(float)));
        } else {
            for (float f : v) put<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
        }
    }

    static void get_floats(std::istream& is, std::vector<float>& v) {
        if constexpr (std::endian::native == std::endian::little) {
            is.read(reinterpret_cast<char*>(v.data()),
                    static_cast<std::streamsize>(v.size() * sizeof(float)));
            if (!is) throw DataError("truncated n-gram model file");
        } else {
            for (float& f : v) f = std::bit_cast<float>(get<std::uint32_t>(is));
        }
    }

    friend class NgramTrainer;

    NgramHyperparams hp_;
    Task task_;
    std::vector<float> input_;   // bucket_count x dim
    std::vector<float> output_;  // num_labels x dim
};

class NgramTrainer {
public:
    static NgramModel train(std::span<const LabeledText> corpus, Task task, const NgramHyperparams& hp) {
        hp.validate();
        if (corpus.empty()) throw UsageError("cannot train on an empty corpus");
        std::vector<bool> seen(label_arity(task), false);
        for (const auto& ex : corpus) {
            if (!is_valid_for(task, ex.label))
                throw DataError("corpus label " + std::string(to_string(ex.label)) + " is not valid for task");
            seen[label_index(ex.label)] = true;
        }
        if (std::count(seen.begin(), seen.end(), true) < 2)
            throw DataError("corpus must contain at least two distinct labels");

        NgramModel model(hp, task);
        std::vector<Example> examples;
        examples.reserve(corpus.size());
        for (const auto& ex : corpus)
            examples.push_back({model.features(ex.text), static_cast<std::uint32_t>(label_index(ex.label))});

        const std::uint64_t total = static_cast<std::uint64_t>(hp.epochs) * examples.size();
        if (hp.workers == 1) {
            Worker<false> w{model, hp.learning_rate, total};
            for (unsigned epoch = 0; epoch < hp.epochs; ++epoch)
                for (std::size_t i = 0; i < examples.size(); ++i)
                    w.step(examples[i], epoch, epoch * examples.size() + i);
        } else {
            std::atomic<std::uint64_t> progress{0};
            std::vector<std::thread> threads;
            std::vector<std::exception_ptr> errors(hp.workers);
            const std::size_t n = examples.size();
            for (unsigned t = 0; t < hp.workers; ++t) {
                threads.emplace_back([&, t] {
                    try {
                        Worker<true> w{model, hp.learning_rate, total};
                        const std::size_t lo = n * t / hp.workers, hi = n * (t + 1) / hp.workers;
                        for (unsigned epoch = 0; epoch < hp.epochs; ++epoch)
                            for (std::size_t i = lo; i < hi; ++i)
                                w.step(examples[i], epoch, progress.fetch_add(1, std::memory_order_relaxed));
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            }
            for (auto& th : threads) th.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        return model;
    }

private:
    struct Example {
        std::vector<std::uint32_t> feats;
        std::uint32_t label;
    };

    template <bool Shared>
    struct Worker {
        NgramModel& m;
        double lr0;
        std::uint64_t total;
        std::vector<double> h, grad, scores;

        Worker(NgramModel& model, double lr, std::uint64_t total_steps)
            : m(model), lr0(lr), total(total_steps) {
            h.resize(m.hp_.embedding_dim);
            grad.resize(m.hp_.embedding_dim);
            scores.resize(m.num_labels());
        }

        static float load(float& x) {
            if constexpr (Shared) return std::atomic_ref<float>(x).load(std::memory_order_relaxed);
            else return x;
        }
        static void add(float& x, double delta) {
            if constexpr (Shared) {
                std::atomic_ref<float> r(x);
                r.store(static_cast<float>(r.load(std::memory_order_relaxed) + delta),
                        std::memory_order_relaxed);
            } else {
                x = static_cast<float>(x + delta);
            }
        }

        void step(const Example& ex, unsigned epoch, std::uint64_t step_index) {
            if (ex.feats.empty()) return;
            const std::size_t dim = m.hp_.embedding_dim;
            const double lr = lr0 * (1.0 - static_cast<double>(step_index) / static_cast<double>(total));

            std::fill(h.begin(), h.end(), 0.0);
            for (std::uint32_t f : ex.feats) {
                float* row = &m.input_[static_cast<std::size_t>(f) * dim];
                for (std::size_t d = 0; d < dim; ++d) h[d] += load(row[d]);
            }
            const double inv_n = 1.0 / static_cast<double>(ex.feats.size());
            for (double& x : h) x *= inv_n;

            for (std::size_t i = 0; i < scores.size(); ++i) {
                float* row = &m.output_[i * dim];
                double s = 0;
                for (std::size_t d = 0; d < dim; ++d) s += load(row[d]) * h[d];
                scores[i] = s;
            }
            auto p = softmax(scores);
            const double loss = -std::log(p[ex.label]);
            if (!std::isfinite(loss))
                throw Error(ErrorKind::internal, "non-finite training loss at epoch " +
                                                     std::to_string(epoch) + ", step " +
                                                     std::to_string(step_index));

            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const double alpha = lr * ((i == ex.label ? 1.0 : 0.0) - p[i]);
                float* row = &m.output_[i * dim];
                for (std::size_t d = 0; d < dim; ++d) {
                    grad[d] += alpha * load(row[d]);
                    add(row[d], alpha * h[d]);
                }
            }
            for (double& g : grad) g *= inv_n;
            for (std::uint32_t f : ex.feats) {
                float* row = &m.input_[static_cast<std::size_t>(f) * dim];
                for (std::size_t d = 0; d < dim; ++d) add(row[d], grad[d]);
            }
        }
    };
};

inline NgramModel train_ngram(std::span<const LabeledText> corpus, Task task, const NgramHyperparams& hp) {
    return NgramTrainer::train(corpus, task, hp);
}

// Lexical corpus from dataset instances under a view.
inline std::vector<LabeledText> lexical_corpus(std::span<const Instance> instances, InputView view,
                                               const DecomposeOptions& opt = {}) {
    std::vector<LabeledText> out;
    out.reserve(instances.size());
    for (const auto& in : instances) out.push_back({bow_text(in, view, opt), in.gold});
    return out;
}

}  // namespace ctxprobe
