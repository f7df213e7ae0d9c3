#include "owd/embed_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "owd/errors.hpp"

namespace owd {

std::vector<std::vector<double>> roi_pool_teacher(const TeacherFeatureMap& f,
                                                  const std::vector<Box>& boxes) {
    const int dt = f.dt(), ht = f.ht(), wt = f.wt();
    const double st = f.stride;
    std::vector<std::vector<double>> pooled;
    pooled.reserve(boxes.size());
    for (const Box& b : boxes) {
        // footprint: cells whose centers land inside [x1, x2) x [y1, y2)
        int gx1 = static_cast<int>(std::ceil(b.x1 / st - 0.5));
        int gx2 = static_cast<int>(std::ceil(b.x2 / st - 0.5));
        int gy1 = static_cast<int>(std::ceil(b.y1 / st - 0.5));
        int gy2 = static_cast<int>(std::ceil(b.y2 / st - 0.5));
        gx1 = std::max(gx1, 0);
        gy1 = std::max(gy1, 0);
        gx2 = std::min(gx2, wt);
        gy2 = std::min(gy2, ht);
        if (gx1 >= gx2 || gy1 >= gy2) {
            // sub-cell box: nearest cell to the center
            gx1 = std::clamp(static_cast<int>(std::floor(b.cx() / st)), 0, wt - 1);
            gy1 = std::clamp(static_cast<int>(std::floor(b.cy() / st)), 0, ht - 1);
            gx2 = gx1 + 1;
            gy2 = gy1 + 1;
        }
        std::vector<double> v(static_cast<std::size_t>(dt), 0.0);
        int count = 0;
        for (int gy = gy1; gy < gy2; ++gy)
            for (int gx = gx1; gx < gx2; ++gx) {
                for (int d = 0; d < dt; ++d) v[static_cast<std::size_t>(d)] += f.features.at3(d, gy, gx);
                ++count;
            }
        double norm2 = 0.0;
        for (auto& x : v) {
            x /= count;
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        if (norm > 1e-12)
            for (auto& x : v) x /= norm;
        else
            v[0] = 1.0;
        pooled.push_back(std::move(v));
    }
    return pooled;
}

SimilarityMatrix similarity_matrix(const std::vector<std::vector<double>>& unit_vectors) {
    const int n = static_cast<int>(unit_vectors.size());
    SimilarityMatrix s(n);
    for (int i = 0; i < n; ++i) {
        s.at(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double dot = 0.0;
            const auto& a = unit_vectors[static_cast<std::size_t>(i)];
            const auto& b = unit_vectors[static_cast<std::size_t>(j)];
            for (std::size_t d = 0; d < a.size(); ++d) dot += a[d] * b[d];
            s.at(i, j) = dot;
            s.at(j, i) = dot;
        }
    }
    return s;
}

namespace {

// softmax over the off-diagonal entries of row i, scaled by 1/tau
std::vector<double> row_softmax(const SimilarityMatrix& m, int i, double tau) {
    const int n = m.n;
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    double zmax = -1e300;
    for (int j = 0; j < n; ++j)
        if (j != i) zmax = std::max(zmax, m.at(i, j) / tau);
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
        if (j != i) {
            p[static_cast<std::size_t>(j)] = std::exp(m.at(i, j) / tau - zmax);
            denom += p[static_cast<std::size_t>(j)];
        }
    for (int j = 0; j < n; ++j)
        if (j != i) p[static_cast<std::size_t>(j)] /= denom;
    return p;
}

// dL/dS for the configured loss; zero diagonal.
SimilarityMatrix loss_and_grad_matrix(const SimilarityMatrix& T, const SimilarityMatrix& S,
                                      const TransferConfig& cfg, double& loss) {
    const int n = S.n;
    SimilarityMatrix g(n);
    loss = 0.0;
    if (cfg.loss_kind == TransferConfig::LossKind::RowKL) {
        for (int i = 0; i < n; ++i) {
            const auto pt = row_softmax(T, i, cfg.tau_t);
            const auto ps = row_softmax(S, i, cfg.tau_t);
            double kl = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double a = pt[static_cast<std::size_t>(j)];
                const double b = ps[static_cast<std::size_t>(j)];
                if (a > 0.0) kl += a * (std::log(a) - std::log(b));
                g.at(i, j) = (b - a) / (cfg.tau_t * n);
            }
            loss += kl;
        }
        loss /= n;
    } else {
        const double inv = 1.0 / (static_cast<double>(n) * (n - 1));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = S.at(i, j) - T.at(i, j);
                loss += d * d * inv;
                g.at(i, j) = 2.0 * d * inv;
            }
    }
    return g;
}

}  // namespace

double transfer_loss_value(const SimilarityMatrix& T, const SimilarityMatrix& S,
                           const TransferConfig& cfg) {
    if (S.n < cfg.min_instances) return 0.0;
    double loss = 0.0;
    loss_and_grad_matrix(T, S, cfg, loss);
    if (!std::isfinite(loss)) throw NonFiniteError("transfer_loss");
    return loss;
}

TransferLossResult transfer_loss(const SimilarityMatrix& T,
                                 const std::vector<std::vector<double>>& raw_embeddings,
                                 const TransferConfig& cfg) {
    TransferLossResult res;
    const int n = static_cast<int>(raw_embeddings.size());
    res.d_embeddings.assign(static_cast<std::size_t>(n), {});
    for (int i = 0; i < n; ++i)
        res.d_embeddings[static_cast<std::size_t>(i)]
            .assign(raw_embeddings[static_cast<std::size_t>(i)].size(), 0.0);
    if (n < cfg.min_instances) return res;

    // normalize with gradient bookkeeping
    std::vector<std::vector<double>> unit(raw_embeddings);
    std::vector<double> norms(static_cast<std::size_t>(n), 1.0);
    for (int i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (double x : unit[static_cast<std::size_t>(i)]) norm2 += x * x;
        const double norm = std::max(std::sqrt(norm2), 1e-12);
        norms[static_cast<std::size_t>(i)] = norm;
        for (auto& x : unit[static_cast<std::size_t>(i)]) x /= norm;
    }

    const SimilarityMatrix S = similarity_matrix(unit);
    double loss = 0.0;
    const SimilarityMatrix g = loss_and_grad_matrix(T, S, cfg, loss);
    res.loss = loss;
    if (!std::isfinite(loss)) throw NonFiniteError("transfer_loss");

    // dL/de_i = sum_j (g_ij + g_ji) e_j, then back through normalization
    for (int i = 0; i < n; ++i) {
        const std::size_t dim = unit[static_cast<std::size_t>(i)].size();
        std::vector<double> de(dim, 0.0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w = g.at(i, j) + g.at(j, i);
            if (w == 0.0) continue;
            const auto& ej = unit[static_cast<std::size_t>(j)];
            for (std::size_t d = 0; d < dim; ++d) de[d] += w * ej[d];
        }
        const auto& ei = unit[static_cast<std::size_t>(i)];
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) dot += de[d] * ei[d];
        auto& out = res.d_embeddings[static_cast<std::size_t>(i)];
        for (std::size_t d = 0; d < dim; ++d)
            out[d] = (de[d] - dot * ei[d]) / norms[static_cast<std::size_t>(i)];
    }
    return res;
}

TransferInstances collect_transfer_instances(const std::vector<Box>& known_gt,
                                             const std::vector<Instance>& decoded,
                                             const std::vector<int>& candidate_indices,
                                             const DenseOutput& out) {
    TransferInstances t;
    for (const Box& b : known_gt) {
        const int col = std::clamp(static_cast<int>(std::floor(b.cx() / out.stride)), 0, out.wf - 1);
        const int row = std::clamp(static_cast<int>(std::floor(b.cy() / out.stride)), 0, out.hf - 1);
        t.boxes.push_back(b);
        t.cells.push_back(row * out.wf + col);
    }
    t.num_gt = static_cast<int>(t.boxes.size());
    for (int idx : candidate_indices) {
        const Instance& inst = decoded[static_cast<std::size_t>(idx)];
        t.boxes.push_back(inst.box);
        t.cells.push_back(inst.cell);
    }
    return t;
}

std::vector<std::vector<double>> read_embeddings_at(const DenseOutput& out,
                                                    const std::vector<int>& cells) {
    const int D = out.embeddings.dim(0);
    const int n_cells = out.cells();
    std::vector<std::vector<double>> res;
    res.reserve(cells.size());
    for (int cell : cells) {
        std::vector<double> v(static_cast<std::size_t>(D));
        for (int d = 0; d < D; ++d)
            v[static_cast<std::size_t>(d)] = out.embeddings[static_cast<std::size_t>(d) * n_cells + cell];
        res.push_back(std::move(v));
    }
    return res;
}

void scatter_embedding_grads(const std::vector<std::vector<double>>& d_embeddings,
                             const std::vector<int>& cells, Tensor& d_emb_map) {
    const int D = d_emb_map.dim(0);
    const int n_cells = d_emb_map.dim(1) * d_emb_map.dim(2);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const int cell = cells[i];
        for (int d = 0; d < D; ++d)
            d_emb_map[static_cast<std::size_t>(d) * n_cells + cell] += d_embeddings[i][static_cast<std::size_t>(d)];
    }
}

void save_teacher_map(const std::string& path, const TeacherFeatureMap& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    const char magic[8] = {'O', 'W', 'D', 'T', 'F', 'M', '0', '1'};
    f.write(magic, 8);
    const std::int32_t hdr[4] = {static_cast<std::int32_t>(map.stride),
                                 static_cast<std::int32_t>(map.dt()),
                                 static_cast<std::int32_t>(map.ht()),
                                 static_cast<std::int32_t>(map.wt())};
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    f.write(reinterpret_cast<const char*>(map.features.ptr()),
            static_cast<std::streamsize>(map.features.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path);
}

TeacherFeatureMap load_teacher_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "OWDTFM01", 8) != 0)
        throw SchemaError("bad teacher map magic in " + path);
    std::int32_t hdr[4];
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (!f || hdr[0] <= 0 || hdr[1] <= 0 || hdr[2] <= 0 || hdr[3] <= 0)
        throw SchemaError("bad teacher map header in " + path);
    TeacherFeatureMap map;
    map.stride = hdr[0];
    map.features = Tensor({hdr[1], hdr[2], hdr[3]});
    f.read(reinterpret_cast<char*>(map.features.ptr()),
           static_cast<std::streamsize>(map.features.size() * sizeof(double)));
    if (!f) throw SchemaError("truncated teacher map: " + path);
    return map;
}

}  // namespace owd
