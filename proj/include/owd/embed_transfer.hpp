#pragma once

#include <string>
#include <vector>

#include "owd/detector.hpp"
#include "owd/geometry.hpp"
#include "owd/tensor.hpp"

namespace owd {

/// Frozen teacher features on a coarse grid. Never receives gradients:
/// nothing in the training path writes to it, and no gradient buffer for
/// it exists anywhere.
struct TeacherFeatureMap {
    int stride = 8;   // pixels per teacher cell
    Tensor features;  // [Dt][Ht][Wt]

    int ht() const { return features.dim(1); }
    int wt() const { return features.dim(2); }
    int dt() const { return features.dim(0); }
};

struct SimilarityMatrix {
    int n = 0;
    std::vector<double> v;  // row-major n x n

    SimilarityMatrix() = default;
    explicit SimilarityMatrix(int n_) : n(n_), v(static_cast<std::size_t>(n_) * n_, 0.0) {}
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * n + j]; }
};

struct TransferConfig {
    enum class LossKind { RowKL, MatrixMSE };
    double tau_t = 0.1;
    LossKind loss_kind = LossKind::RowKL;
    double lambda_transfer = 1.0;
    int min_instances = 2;
    // One similarity matrix per batch instead of per image. Same-category
    // pairs are rare within a single synthetic scene, so the relational
    // structure only becomes visible across images.
    bool cross_batch = true;
};

/// Mean teacher feature over each box's footprint on the teacher grid
/// (nearest cell when the footprint would be empty), L2-normalized.
std::vector<std::vector<double>> roi_pool_teacher(const TeacherFeatureMap& f,
                                                  const std::vector<Box>& boxes);

/// Pairwise dot products of unit vectors; exactly symmetric (upper
/// triangle mirrored), unit diagonal.
SimilarityMatrix similarity_matrix(const std::vector<std::vector<double>>& unit_vectors);

/// Loss value between a (detached) teacher matrix and a student matrix.
/// RowKL: per row, softmax over off-diagonal entries / tau for both sides,
/// mean KL(teacher || student). MatrixMSE: mean squared off-diagonal
/// difference. Returns 0 when n < min_instances.
double transfer_loss_value(const SimilarityMatrix& T, const SimilarityMatrix& S,
                           const TransferConfig& cfg);

struct TransferLossResult {
    double loss = 0.0;
    std::vector<std::vector<double>> d_embeddings;  // per raw student embedding
};

/// Full student-side loss: normalizes the raw embeddings, builds S, applies
/// transfer_loss_value, and backpropagates to the raw embeddings. The
/// teacher matrix is input data only.
TransferLossResult transfer_loss(const SimilarityMatrix& T,
                                 const std::vector<std::vector<double>>& raw_embeddings,
                                 const TransferConfig& cfg);

/// The boxes whose embeddings join the per-image similarity matrices:
/// known gt boxes plus the unknown candidates, each tied to the student
/// grid cell its embedding is read from.
struct TransferInstances {
    std::vector<Box> boxes;
    std::vector<int> cells;      // aligned with boxes
    int num_gt = 0;              // leading entries come from gt
};

TransferInstances collect_transfer_instances(const std::vector<Box>& known_gt,
                                             const std::vector<Instance>& decoded,
                                             const std::vector<int>& candidate_indices,
                                             const DenseOutput& out);

/// Raw (unnormalized) student embeddings at the given cells.
std::vector<std::vector<double>> read_embeddings_at(const DenseOutput& out,
                                                    const std::vector<int>& cells);

/// Scatter d_embeddings back into a [D][Hf][Wf] gradient map (accumulating;
/// several instances may share a cell).
void scatter_embedding_grads(const std::vector<std::vector<double>>& d_embeddings,
                             const std::vector<int>& cells, Tensor& d_emb_map);

// Offline teacher-map container (see README for the byte layout).
void save_teacher_map(const std::string& path, const TeacherFeatureMap& map);
TeacherFeatureMap load_teacher_map(const std::string& path);

}  // namespace owd
