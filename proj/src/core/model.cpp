// SPDX-License-Identifier: Apache-2.0

#include "core/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "core/error.hpp"
#include "core/hash.hpp"

namespace mdap {

std::string_view ablation_name(Ablation a) noexcept {
    switch (a) {
    case Ablation::full:
        return "full";
    case Ablation::no_gumbel:
        return "no_gumbel";
    case Ablation::single_view:
        return "single_view";
    case Ablation::no_gate:
        return "no_gate";
    }
    return "?";
}

std::string_view ablation_label(Ablation a) noexcept {
    switch (a) {
    case Ablation::full:
        return "MDAP";
    case Ablation::no_gumbel:
        return "MDAP-GS";
    case Ablation::single_view:
        return "MDAP-MV";
    case Ablation::no_gate:
        return "MDAP-DG";
    }
    return "?";
}

Ablation parse_ablation(std::string_view text) {
    for (Ablation a : kAblations) {
        if (text == ablation_name(a) || text == ablation_label(a)) {
            return a;
        }
    }
    throw ParameterError("unknown ablation '" + std::string(text) +
                         "' (expected full, no_gumbel, single_view or no_gate)");
}

void ModelConfig::validate() const {
    if (views < 1) {
        throw ParameterError("view count k must be at least 1");
    }
    if (embed_dim < 1) {
        throw ParameterError("embedding dimension must be at least 1");
    }
    if (hidden < 1) {
        throw ParameterError("hidden width must be at least 1");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ParameterError("temperature tau must be positive");
    }
    validate_keep_prob(keep_prob);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ParameterError("lambda must be nonnegative");
    }
    if (static_cast<std::uint32_t>(ablation) > static_cast<std::uint32_t>(Ablation::no_gate)) {
        throw ParameterError("invalid ablation code");
    }
}

// ---- params ----------------------------------------------------------------

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return m;
}

} // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::size_t items_s, std::size_t items_t, Rng& rng) {
    config.validate();
    const std::size_t n = items_s + items_t;
    const std::size_t k = config.effective_views();
    const std::size_t l = config.embed_dim;
    const std::size_t h = config.hidden;
    if (items_s == 0 || items_t == 0) {
        throw ParameterError("both domains need at least one item");
    }
    ModelParams p;
    p.items_s = items_s;
    p.items_t = items_t;
    p.item_emb = glorot(n, l, rng);
    p.core_emb = glorot(k, l, rng);
    p.enc_w1 = glorot(n, h, rng);
    p.enc_b1 = Matrix(1, h);
    p.enc_w2 = glorot(h, l, rng);
    p.enc_b2 = Matrix(1, l);
    p.dec_w1 = glorot(l, h, rng);
    p.dec_b1 = Matrix(1, h);
    p.dec_w2 = glorot(h, n, rng);
    p.dec_b2 = Matrix(1, n);
    p.gate_table = Matrix(2, k);
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& like) {
    ModelParams z;
    z.items_s = like.items_s;
    z.items_t = like.items_t;
    auto dst = z.fields();
    const auto src = like.fields();
    for (std::size_t i = 0; i < kParamFieldCount; ++i) {
        *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
    }
    return z;
}

std::array<Matrix*, kParamFieldCount> ModelParams::fields() noexcept {
    return {&item_emb, &core_emb, &enc_w1, &enc_b1, &enc_w2, &enc_b2,
            &dec_w1,   &dec_b1,   &dec_w2, &dec_b2, &gate_table};
}

std::array<const Matrix*, kParamFieldCount> ModelParams::fields() const noexcept {
    return {&item_emb, &core_emb, &enc_w1, &enc_b1, &enc_w2, &enc_b2,
            &dec_w1,   &dec_b1,   &dec_w2, &dec_b2, &gate_table};
}

const std::array<std::string_view, kParamFieldCount>& ModelParams::field_names() noexcept {
    static const std::array<std::string_view, kParamFieldCount> names = {
        "item_emb", "core_emb", "enc_w1", "enc_b1", "enc_w2", "enc_b2",
        "dec_w1",   "dec_b1",   "dec_w2", "dec_b2", "gate_table"};
    return names;
}

void ModelParams::check_shapes(const ModelConfig& config) const {
    const std::size_t n = total_items();
    const std::size_t k = config.effective_views();
    const std::size_t l = config.embed_dim;
    const std::size_t h = config.hidden;
    const std::array<std::pair<std::size_t, std::size_t>, kParamFieldCount> expected = {{
        {n, l}, {k, l}, {n, h}, {1, h}, {h, l}, {1, l}, {l, h}, {1, h}, {h, n}, {1, n}, {2, k},
    }};
    const auto fs = fields();
    for (std::size_t i = 0; i < kParamFieldCount; ++i) {
        if (fs[i]->rows() != expected[i].first || fs[i]->cols() != expected[i].second) {
            std::ostringstream os;
            os << "parameter " << field_names()[i] << " has shape " << shape_string(*fs[i]) << ", expected "
               << expected[i].first << "x" << expected[i].second;
            throw ShapeError(os.str());
        }
    }
}

// ---- stages ----------------------------------------------------------------

Matrix category_logits_prepared(const ModelParams& params, const Matrix& prepared_rows) {
    const Matrix item_norm = row_l2_normalize(params.item_emb);
    const Matrix core_norm = row_l2_normalize(params.core_emb);
    return matmul_nt(matmul(prepared_rows, item_norm), core_norm);
}

Matrix category_logits(const ModelParams& params, const Matrix& batch_rows, double keep_prob, Rng& rng, bool training) {
    const Matrix dropped = dropout(row_l2_normalize(batch_rows), keep_prob, rng, training);
    return category_logits_prepared(params, dropped);
}

Matrix gumbel_softmax_assign(const Matrix& logits, double tau, Rng& rng, bool training, Ablation ablation) {
    if (training && ablation == Ablation::full) {
        Matrix noisy = sample_gumbel(rng, logits.rows(), logits.cols());
        auto v = noisy.values();
        const auto c = logits.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] += c[i];
        }
        return softmax_rows(noisy, tau);
    }
    return softmax_rows(logits, tau);
}

std::vector<Matrix> view_inputs(const Matrix& rows, const Matrix& assignment) {
    if (rows.rows() != assignment.rows()) {
        throw ShapeError("view_inputs: " + shape_string(rows) + " rows vs assignment " + shape_string(assignment));
    }
    std::vector<Matrix> out;
    out.reserve(assignment.cols());
    for (std::size_t i = 0; i < assignment.cols(); ++i) {
        Matrix m = rows;
        for (std::size_t b = 0; b < m.rows(); ++b) {
            const double w = assignment(b, i);
            for (double& v : m.row(b)) {
                v *= w;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

void add_row_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += bias(0, c);
        }
    }
}

void tanh_inplace(Matrix& m) {
    for (double& v : m.values()) {
        v = std::tanh(v);
    }
}

Matrix encode_from_projection(const Matrix& projection, std::span<const double> row_scale, const Matrix& bias) {
    Matrix pre = projection;
    for (std::size_t b = 0; b < pre.rows(); ++b) {
        for (double& v : pre.row(b)) {
            v *= row_scale[b];
        }
    }
    add_row_bias(pre, bias);
    tanh_inplace(pre);
    return pre;
}

} // namespace

EncoderOutput encode_view(const ModelParams& params, const Matrix& view_input) {
    EncoderOutput out;
    out.hidden = matmul(view_input, params.enc_w1);
    add_row_bias(out.hidden, params.enc_b1);
    tanh_inplace(out.hidden);
    out.embedding = matmul(out.hidden, params.enc_w2);
    add_row_bias(out.embedding, params.enc_b2);
    return out;
}

Matrix encode_view(const ModelParams& params, const Matrix& view_input, double keep_prob, Rng& rng, bool training) {
    return encode_view(params, dropout(view_input, keep_prob, rng, training)).embedding;
}

std::vector<double> gate_weights(const ModelParams& params, Domain domain, Ablation ablation) {
    const std::size_t k = params.gate_table.cols();
    if (ablation == Ablation::no_gate) {
        return std::vector<double>(k, 1.0 / static_cast<double>(k));
    }
    return softmax(params.gate_table.row(index_of(domain)));
}

Matrix combine_views(std::span<const Matrix> view_embs, std::span<const double> weights) {
    if (view_embs.size() != weights.size() || view_embs.empty()) {
        throw ShapeError("combine_views: " + std::to_string(view_embs.size()) + " views but " +
                         std::to_string(weights.size()) + " weights");
    }
    Matrix z(view_embs[0].rows(), view_embs[0].cols());
    for (std::size_t i = 0; i < view_embs.size(); ++i) {
        if (!view_embs[i].same_shape(z)) {
            throw ShapeError("combine_views: view embeddings differ in shape");
        }
        auto dst = z.values();
        const auto src = view_embs[i].values();
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += weights[i] * src[j];
        }
    }
    return z;
}

namespace {

/// hidden . w[:, begin:end] + bias[begin:end]
Matrix project_columns(const Matrix& hidden, const Matrix& w, const Matrix& bias, std::size_t begin, std::size_t end) {
    Matrix out(hidden.rows(), end - begin);
    for (std::size_t b = 0; b < hidden.rows(); ++b) {
        double* dst = out.row(b).data();
        for (std::size_t c = 0; c < end - begin; ++c) {
            dst[c] = bias(0, begin + c);
        }
        for (std::size_t h = 0; h < hidden.cols(); ++h) {
            const double a = hidden(b, h);
            const double* src = w.row(h).data() + begin;
            for (std::size_t c = 0; c < end - begin; ++c) {
                dst[c] += a * src[c];
            }
        }
    }
    require_finite(out, "decoder output");
    return out;
}

std::pair<std::size_t, std::size_t> column_range(std::size_t items_s, std::size_t total, Domain domain) {
    return domain == Domain::source ? std::pair{std::size_t{0}, items_s} : std::pair{items_s, total};
}

} // namespace

DecoderOutput decode(const ModelParams& params, const Matrix& combined) {
    DecoderOutput out;
    out.hidden = matmul(combined, params.dec_w1);
    add_row_bias(out.hidden, params.dec_b1);
    tanh_inplace(out.hidden);
    out.output = project_columns(out.hidden, params.dec_w2, params.dec_b2, 0, params.total_items());
    return out;
}

DecoderOutput decode_slice(const ModelParams& params, const Matrix& combined, Domain domain) {
    DecoderOutput out;
    out.hidden = matmul(combined, params.dec_w1);
    add_row_bias(out.hidden, params.dec_b1);
    tanh_inplace(out.hidden);
    const auto [begin, end] = column_range(params.items_s, params.total_items(), domain);
    out.output = project_columns(out.hidden, params.dec_w2, params.dec_b2, begin, end);
    return out;
}

Matrix domain_slice(const Matrix& full, std::size_t items_s, Domain domain) {
    if (items_s > full.cols()) {
        throw ShapeError("domain_slice: source width exceeds matrix " + shape_string(full));
    }
    const auto [begin, end] = column_range(items_s, full.cols(), domain);
    Matrix out(full.rows(), end - begin);
    for (std::size_t r = 0; r < full.rows(); ++r) {
        const auto src = full.row(r);
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin), src.begin() + static_cast<std::ptrdiff_t>(end),
                  out.row(r).begin());
    }
    return out;
}

// ---- full pass -------------------------------------------------------------

NoiseSample draw_noise(const ModelConfig& config, std::size_t batch, std::size_t total_items, Rng& rng) {
    NoiseSample noise;
    if (config.keep_prob < 1.0) {
        noise.dropout_mask = draw_dropout_mask(batch, total_items, config.keep_prob, rng).mask;
    }
    if (config.ablation == Ablation::full) {
        noise.gumbel = sample_gumbel(rng, batch, config.effective_views());
    }
    return noise;
}

ForwardTrace forward(const ModelParams& params, const ModelConfig& config, const Matrix& batch_rows, Rng& rng,
                     bool training) {
    NoiseSample noise;
    if (training) {
        noise = draw_noise(config, batch_rows.rows(), params.total_items(), rng);
    }
    return forward_with_noise(params, config, batch_rows, std::move(noise), training);
}

ForwardTrace forward_with_noise(const ModelParams& params, const ModelConfig& config, const Matrix& batch_rows,
                                NoiseSample noise, bool training) {
    config.validate();
    params.check_shapes(config);
    const std::size_t batch = batch_rows.rows();
    const std::size_t k = config.effective_views();
    if (batch_rows.cols() != params.total_items()) {
        throw ShapeError("forward: batch rows " + shape_string(batch_rows) + " but model has " +
                         std::to_string(params.total_items()) + " items");
    }
    if (!noise.dropout_mask.empty() && !noise.dropout_mask.same_shape(batch_rows)) {
        throw ShapeError("forward: dropout mask " + shape_string(noise.dropout_mask) + " vs batch " +
                         shape_string(batch_rows));
    }
    if (!noise.gumbel.empty() && (noise.gumbel.rows() != batch || noise.gumbel.cols() != k)) {
        throw ShapeError("forward: gumbel noise " + shape_string(noise.gumbel) + " vs " + std::to_string(batch) +
                         "x" + std::to_string(k));
    }

    ForwardTrace t;
    t.training = training;
    t.ablation = config.ablation;
    t.tau = config.tau;
    t.input = batch_rows;
    t.normalized = row_l2_normalize(batch_rows);
    t.noise = std::move(noise);
    t.dropped = t.noise.dropout_mask.empty() ? t.normalized : DropoutMask{config.keep_prob, 1.0 / config.keep_prob, t.noise.dropout_mask}.apply(t.normalized);

    if (config.ablation == Ablation::single_view) {
        t.assignment = Matrix(batch, 1, 1.0);
    } else {
        t.item_norm = row_l2_normalize(params.item_emb);
        t.core_norm = row_l2_normalize(params.core_emb);
        t.projected = matmul(t.dropped, t.item_norm);
        t.logits = matmul_nt(t.projected, t.core_norm);
        Matrix y = t.logits;
        if (!t.noise.gumbel.empty()) {
            auto v = y.values();
            const auto g = t.noise.gumbel.values();
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] += g[i];
            }
        }
        t.assignment = softmax_rows(y, config.tau);
    }

    t.enc_projection = matmul(t.dropped, params.enc_w1);
    std::vector<double> scale(batch);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t b = 0; b < batch; ++b) {
            scale[b] = t.assignment(b, i);
        }
        Matrix hidden = encode_from_projection(t.enc_projection, scale, params.enc_b1);
        Matrix emb = matmul(hidden, params.enc_w2);
        add_row_bias(emb, params.enc_b2);
        t.enc_hidden.push_back(std::move(hidden));
        t.view_embs.push_back(std::move(emb));
    }

    for (Domain d : kDomains) {
        const std::size_t di = index_of(d);
        t.gates[di] = gate_weights(params, d, config.ablation);
        t.combined[di] = combine_views(t.view_embs, t.gates[di]);
        DecoderOutput dec = decode_slice(params, t.combined[di], d);
        t.dec_hidden[di] = std::move(dec.hidden);
        t.recon[di] = std::move(dec.output);
    }
    return t;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'D', 'A', 'P', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }

    std::vector<std::uint8_t> bytes;

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    void raw(char* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw ParseError("checkpoint truncated");
        }
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    ckpt.config.validate();
    ckpt.params.check_shapes(ckpt.config);
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.config.ablation));
    w.u64(ckpt.config.views);
    w.u64(ckpt.config.embed_dim);
    w.u64(ckpt.config.hidden);
    w.u64(ckpt.params.items_s);
    w.u64(ckpt.params.items_t);
    w.f64(ckpt.config.tau);
    w.f64(ckpt.config.keep_prob);
    w.f64(ckpt.config.lambda);
    const auto fs = ckpt.params.fields();
    w.u32(static_cast<std::uint32_t>(fs.size()));
    for (const Matrix* m : fs) {
        w.u64(m->rows());
        w.u64(m->cols());
    }
    for (const Matrix* m : fs) {
        for (double v : m->values()) {
            w.f64(v);
        }
    }
    return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError("not an MDAP checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint32_t ablation = r.u32();
    if (ablation > static_cast<std::uint32_t>(Ablation::no_gate)) {
        throw ParseError("checkpoint has invalid ablation code " + std::to_string(ablation));
    }
    ckpt.config.ablation = static_cast<Ablation>(ablation);
    ckpt.config.views = r.u64();
    ckpt.config.embed_dim = r.u64();
    ckpt.config.hidden = r.u64();
    ckpt.params.items_s = r.u64();
    ckpt.params.items_t = r.u64();
    ckpt.config.tau = r.f64();
    ckpt.config.keep_prob = r.f64();
    ckpt.config.lambda = r.f64();
    ckpt.config.validate();
    const std::uint32_t count = r.u32();
    if (count != kParamFieldCount) {
        throw ParseError("checkpoint declares " + std::to_string(count) + " parameter arrays");
    }
    auto fs = ckpt.params.fields();
    std::array<std::pair<std::uint64_t, std::uint64_t>, kParamFieldCount> shapes{};
    for (auto& s : shapes) {
        s.first = r.u64();
        s.second = r.u64();
    }
    for (std::size_t i = 0; i < kParamFieldCount; ++i) {
        const auto [rows, cols] = shapes[i];
        if (rows != 0 && cols > (bytes.size() / 8) / rows) {
            throw ParseError("checkpoint shape table exceeds file size");
        }
        std::vector<double> data(rows * cols);
        for (double& v : data) {
            v = r.f64();
        }
        *fs[i] = Matrix(rows, cols, std::move(data));
    }
    if (!r.at_end()) {
        throw ParseError("trailing bytes after checkpoint payload");
    }
    ckpt.params.check_shapes(ckpt.config);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("error while writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read checkpoint " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

std::string checkpoint_id(const Checkpoint& ckpt) {
    return hex64(fnv1a64(serialize_checkpoint(ckpt)));
}

} // namespace mdap
