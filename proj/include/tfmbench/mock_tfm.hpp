#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmbench/classifier.hpp"
#include "tfmbench/common.hpp"

namespace tfmbench {

/// Surface the fine-tuning engine trains against. Parameters live in four
/// named groups mirroring the real backbone: x_encoder, y_encoder,
/// transformer_blocks, decoder.
class TrainableTfm {
 public:
  virtual ~TrainableTfm() = default;

  virtual std::vector<std::string> group_names() const = 0;
  virtual std::size_t group_size(const std::string& group) const = 0;
  virtual Eigen::VectorXd get_group(const std::string& group) const = 0;
  virtual void set_group(const std::string& group,
                         const Eigen::VectorXd& values) = 0;
  virtual std::uint64_t group_checksum(const std::string& group) const = 0;

  /// Positive-class logits for the query rows, conditioned on the labeled
  /// context (a single forward pass, no state change).
  virtual Eigen::VectorXd positive_logits(
      const Eigen::MatrixXd& context_x, const std::vector<int>& context_y,
      const Eigen::MatrixXd& query_x) const = 0;

  /// Forward plus backward: returns per-group parameter gradients for the
  /// given dL/dlogit vector, optionally exposing the logits of the pass.
  virtual std::map<std::string, Eigen::VectorXd> logits_backward(
      const Eigen::MatrixXd& context_x, const std::vector<int>& context_y,
      const Eigen::MatrixXd& query_x, const Eigen::VectorXd& dloss_dlogit,
      Eigen::VectorXd* logits_out) const = 0;

  std::size_t total_parameter_count() const {
    std::size_t total = 0;
    for (const auto& g : group_names()) total += group_size(g);
    return total;
  }
};

struct MockTfmConfig {
  int x_width = 16;      // x_encoder embedding width (2*x_width parameters)
  int y_width = 8;       // y_encoder embedding width (2*y_width parameters)
  int block_width = 24;  // token width inside the block
  std::uint64_t seed = 1;
};

/// Tiny attention network with the same group layout and ICL calling
/// convention as a real tabular foundation model. Feature cells are encoded
/// independently (so parameter counts do not depend on the table width),
/// modulated by a fixed cosine positional code to keep feature identity,
/// and mean-pooled; queries attend over context tokens to aggregate label
/// evidence. Everything is differentiable by hand below.
///
/// Shapes: w_x,b_x in R^hx; w_y,b_y in R^hy; W1 in R^{m x (hx+hy)}, b1 in
/// R^m; W2 in R^{2 x 2m}, b2 in R^2. With x_width=384 and y_width=288 the
/// encoder group sizes are 768 and 576, matching the published backbone.
class MockTfm : public TrainableTfm {
 public:
  explicit MockTfm(const MockTfmConfig& config = {}) : config_(config) {
    require(config.x_width >= 1 && config.y_width >= 1 &&
                config.block_width >= 1,
            "mock_tfm: widths must be >= 1");
    const int hx = config.x_width, hy = config.y_width, m = config.block_width;
    Rng rng = make_rng(config.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto randn = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
      Eigen::MatrixXd out(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = scale * unit(rng);
      return out;
    };
    w_x_ = randn(hx, 1, 1.0);
    b_x_ = randn(hx, 1, 0.5);
    w_y_ = randn(hy, 1, 1.0);
    b_y_ = randn(hy, 1, 0.5);
    w_block_ = randn(m, hx + hy, 1.0 / std::sqrt(static_cast<double>(hx + hy)));
    b_block_ = randn(m, 1, 0.1);
    w_dec_ = randn(2, 2 * m, 1.0 / std::sqrt(static_cast<double>(2 * m)));
    b_dec_ = Eigen::VectorXd::Zero(2);
  }

  const MockTfmConfig& config() const { return config_; }

  // -- parameter groups -----------------------------------------------------

  std::vector<std::string> group_names() const override {
    return {"x_encoder", "y_encoder", "transformer_blocks", "decoder"};
  }

  std::size_t group_size(const std::string& group) const override {
    const int hx = config_.x_width, hy = config_.y_width,
              m = config_.block_width;
    if (group == "x_encoder") return static_cast<std::size_t>(2 * hx);
    if (group == "y_encoder") return static_cast<std::size_t>(2 * hy);
    if (group == "transformer_blocks")
      return static_cast<std::size_t>(m * (hx + hy) + m);
    if (group == "decoder") return static_cast<std::size_t>(2 * 2 * m + 2);
    fail("mock_tfm: unknown parameter group '", group, "'");
  }

  Eigen::VectorXd get_group(const std::string& group) const override {
    if (group == "x_encoder") return concat({w_x_, b_x_});
    if (group == "y_encoder") return concat({w_y_, b_y_});
    if (group == "transformer_blocks") {
      Eigen::VectorXd flat(group_size(group));
      Eigen::Index pos = 0;
      for (Eigen::Index i = 0; i < w_block_.rows(); ++i)
        for (Eigen::Index j = 0; j < w_block_.cols(); ++j)
          flat(pos++) = w_block_(i, j);
      for (Eigen::Index i = 0; i < b_block_.size(); ++i)
        flat(pos++) = b_block_(i);
      return flat;
    }
    if (group == "decoder") {
      Eigen::VectorXd flat(group_size(group));
      Eigen::Index pos = 0;
      for (Eigen::Index i = 0; i < w_dec_.rows(); ++i)
        for (Eigen::Index j = 0; j < w_dec_.cols(); ++j)
          flat(pos++) = w_dec_(i, j);
      for (Eigen::Index i = 0; i < b_dec_.size(); ++i) flat(pos++) = b_dec_(i);
      return flat;
    }
    fail("mock_tfm: unknown parameter group '", group, "'");
  }

  void set_group(const std::string& group,
                 const Eigen::VectorXd& values) override {
    require(static_cast<std::size_t>(values.size()) == group_size(group),
            "mock_tfm: group '", group, "' expects ", group_size(group),
            " values, got ", values.size());
    if (group == "x_encoder") {
      w_x_ = values.head(config_.x_width);
      b_x_ = values.tail(config_.x_width);
    } else if (group == "y_encoder") {
      w_y_ = values.head(config_.y_width);
      b_y_ = values.tail(config_.y_width);
    } else if (group == "transformer_blocks") {
      Eigen::Index pos = 0;
      for (Eigen::Index i = 0; i < w_block_.rows(); ++i)
        for (Eigen::Index j = 0; j < w_block_.cols(); ++j)
          w_block_(i, j) = values(pos++);
      for (Eigen::Index i = 0; i < b_block_.size(); ++i)
        b_block_(i) = values(pos++);
    } else if (group == "decoder") {
      Eigen::Index pos = 0;
      for (Eigen::Index i = 0; i < w_dec_.rows(); ++i)
        for (Eigen::Index j = 0; j < w_dec_.cols(); ++j)
          w_dec_(i, j) = values(pos++);
      for (Eigen::Index i = 0; i < b_dec_.size(); ++i) b_dec_(i) = values(pos++);
    } else {
      fail("mock_tfm: unknown parameter group '", group, "'");
    }
  }

  std::uint64_t group_checksum(const std::string& group) const override {
    Eigen::VectorXd flat = get_group(group);
    Fnv1a h;
    h.update(flat.data(), sizeof(double) * static_cast<std::size_t>(flat.size()));
    return h.value();
  }

  std::uint64_t parameter_checksum() const {
    Fnv1a h;
    for (const auto& g : group_names())
      h.update(group_checksum(g));
    return h.value();
  }

  // -- forward --------------------------------------------------------------

  Eigen::VectorXd positive_logits(const Eigen::MatrixXd& context_x,
                                  const std::vector<int>& context_y,
                                  const Eigen::MatrixXd& query_x) const override {
    Cache cache;
    return forward(context_x, context_y, query_x, &cache);
  }

  std::map<std::string, Eigen::VectorXd> logits_backward(
      const Eigen::MatrixXd& context_x, const std::vector<int>& context_y,
      const Eigen::MatrixXd& query_x, const Eigen::VectorXd& dloss_dlogit,
      Eigen::VectorXd* logits_out) const override {
    Cache cache;
    Eigen::VectorXd logits = forward(context_x, context_y, query_x, &cache);
    if (logits_out) *logits_out = logits;
    return backward(cache, dloss_dlogit);
  }

 private:
  struct Cache {
    const Eigen::MatrixXd* ctx_x = nullptr;
    const Eigen::MatrixXd* qry_x = nullptr;
    std::vector<int> ctx_y;
    std::vector<Eigen::MatrixXd> cells_ctx;  // per context row: d x hx tanh cells
    std::vector<Eigen::MatrixXd> cells_qry;  // per query row
    Eigen::MatrixXd position;                // fixed d x hx positional code
    Eigen::MatrixXd emb_ctx, emb_qry;        // row embeddings (rows x hx)
    Eigen::MatrixXd label_emb;               // context label embeddings (C x hy)
    Eigen::MatrixXd h_ctx, h_qry;            // block outputs (rows x m)
    Eigen::MatrixXd attention;               // Q x C softmax weights
    Eigen::MatrixXd pooled;                  // Q x m attended context
  };

  /// Parameter-free cosine code that keeps feature identity after the
  /// cell-wise encoding is pooled across columns.
  static Eigen::MatrixXd positional_code(Eigen::Index d, int hx) {
    Eigen::MatrixXd code(d, hx);
    for (Eigen::Index f = 0; f < d; ++f)
      for (int k = 0; k < hx; ++k)
        code(f, k) = std::cos(0.7 * static_cast<double>(f + 1) *
                              static_cast<double>(k + 1));
    return code;
  }

  Eigen::VectorXd forward(const Eigen::MatrixXd& context_x,
                          const std::vector<int>& context_y,
                          const Eigen::MatrixXd& query_x, Cache* cache) const {
    require(context_x.rows() > 0, "mock_tfm: empty context");
    require(static_cast<std::size_t>(context_x.rows()) == context_y.size(),
            "mock_tfm: context labels length mismatch");
    require(context_x.cols() == query_x.cols(),
            "mock_tfm: query width ", query_x.cols(), " != context width ",
            context_x.cols());

    const int hx = config_.x_width, hy = config_.y_width,
              m = config_.block_width;
    const Eigen::Index c_rows = context_x.rows(), q_rows = query_x.rows();
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));

    cache->ctx_x = &context_x;
    cache->qry_x = &query_x;
    cache->ctx_y = context_y;
    cache->position = positional_code(context_x.cols(), hx);

    auto encode_rows = [&](const Eigen::MatrixXd& x,
                           std::vector<Eigen::MatrixXd>& cells,
                           Eigen::MatrixXd& emb) {
      const Eigen::Index rows = x.rows(), d = x.cols();
      cells.assign(static_cast<std::size_t>(rows), Eigen::MatrixXd(d, hx));
      emb.resize(rows, hx);
      for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::MatrixXd& cell = cells[static_cast<std::size_t>(r)];
        for (Eigen::Index f = 0; f < d; ++f)
          cell.row(f) =
              ((x(r, f) * w_x_.array() + b_x_.array()).tanh()).transpose();
        emb.row(r) =
            (cell.array() * cache->position.array()).colwise().mean();
      }
    };
    encode_rows(context_x, cache->cells_ctx, cache->emb_ctx);
    encode_rows(query_x, cache->cells_qry, cache->emb_qry);

    cache->label_emb.resize(c_rows, hy);
    for (Eigen::Index j = 0; j < c_rows; ++j) {
      double y = static_cast<double>(context_y[static_cast<std::size_t>(j)]);
      cache->label_emb.row(j) =
          ((y * w_y_.array() + b_y_.array()).tanh()).transpose();
    }

    auto block = [&](const Eigen::MatrixXd& emb,
                     const Eigen::MatrixXd* labels) {
      Eigen::MatrixXd h(emb.rows(), m);
      Eigen::VectorXd token(hx + hy);
      for (Eigen::Index r = 0; r < emb.rows(); ++r) {
        token.head(hx) = emb.row(r).transpose();
        if (labels) token.tail(hy) = labels->row(r).transpose();
        else token.tail(hy).setZero();
        h.row(r) = ((w_block_ * token + b_block_).array().tanh()).transpose();
      }
      return h;
    };
    cache->h_ctx = block(cache->emb_ctx, &cache->label_emb);
    cache->h_qry = block(cache->emb_qry, nullptr);

    cache->attention.resize(q_rows, c_rows);
    cache->pooled.resize(q_rows, m);
    Eigen::VectorXd logits(q_rows);
    for (Eigen::Index i = 0; i < q_rows; ++i) {
      Eigen::VectorXd scores =
          (cache->h_ctx * cache->h_qry.row(i).transpose()) * inv_sqrt_m;
      double peak = scores.maxCoeff();
      Eigen::VectorXd weights = (scores.array() - peak).exp();
      weights /= weights.sum();
      cache->attention.row(i) = weights.transpose();
      cache->pooled.row(i) = weights.transpose() * cache->h_ctx;

      Eigen::VectorXd joint(2 * m);
      joint.head(m) = cache->h_qry.row(i).transpose();
      joint.tail(m) = cache->pooled.row(i).transpose();
      Eigen::Vector2d z = w_dec_ * joint + b_dec_;
      logits(i) = z(1) - z(0);
    }
    return logits;
  }

  std::map<std::string, Eigen::VectorXd> backward(
      const Cache& cache, const Eigen::VectorXd& dlogit) const {
    const int hx = config_.x_width, hy = config_.y_width,
              m = config_.block_width;
    const Eigen::Index q_rows = cache.h_qry.rows(),
                       c_rows = cache.h_ctx.rows();
    require(dlogit.size() == q_rows, "mock_tfm: gradient length ",
            dlogit.size(), " != query count ", q_rows);
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));

    Eigen::VectorXd g_wx = Eigen::VectorXd::Zero(hx),
                    g_bx = Eigen::VectorXd::Zero(hx);
    Eigen::VectorXd g_wy = Eigen::VectorXd::Zero(hy),
                    g_by = Eigen::VectorXd::Zero(hy);
    Eigen::MatrixXd g_wblock = Eigen::MatrixXd::Zero(m, hx + hy);
    Eigen::VectorXd g_bblock = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd g_wdec = Eigen::MatrixXd::Zero(2, 2 * m);
    Eigen::VectorXd g_bdec = Eigen::VectorXd::Zero(2);

    Eigen::MatrixXd g_hq = Eigen::MatrixXd::Zero(q_rows, m);
    Eigen::MatrixXd g_hc = Eigen::MatrixXd::Zero(c_rows, m);

    for (Eigen::Index i = 0; i < q_rows; ++i) {
      // z+ = z1 - z0
      Eigen::Vector2d dz(-dlogit(i), dlogit(i));
      Eigen::VectorXd joint(2 * m);
      joint.head(m) = cache.h_qry.row(i).transpose();
      joint.tail(m) = cache.pooled.row(i).transpose();
      g_wdec += dz * joint.transpose();
      g_bdec += dz;

      Eigen::VectorXd g_joint = w_dec_.transpose() * dz;
      g_hq.row(i) += g_joint.head(m).transpose();
      Eigen::VectorXd g_pooled = g_joint.tail(m);

      // pooled = attention * h_ctx; softmax over scores
      Eigen::VectorXd weights = cache.attention.row(i).transpose();
      Eigen::VectorXd dots = cache.h_ctx * g_pooled;  // per context row
      double weighted = weights.dot(dots);
      for (Eigen::Index j = 0; j < c_rows; ++j) {
        g_hc.row(j) += weights(j) * g_pooled.transpose();  // value path
        double dscore = weights(j) * (dots(j) - weighted);
        g_hq.row(i) += dscore * inv_sqrt_m * cache.h_ctx.row(j);
        g_hc.row(j) += dscore * inv_sqrt_m * cache.h_qry.row(i);
      }
    }

    // Block and encoders, queries then context.
    Eigen::MatrixXd g_emb_qry = Eigen::MatrixXd::Zero(q_rows, hx);
    Eigen::MatrixXd g_emb_ctx = Eigen::MatrixXd::Zero(c_rows, hx);
    Eigen::MatrixXd g_label = Eigen::MatrixXd::Zero(c_rows, hy);

    Eigen::VectorXd token(hx + hy);
    for (Eigen::Index r = 0; r < q_rows; ++r) {
      Eigen::VectorXd dpre = (1.0 - cache.h_qry.row(r).transpose().array().square())
                                 .matrix()
                                 .cwiseProduct(g_hq.row(r).transpose());
      token.head(hx) = cache.emb_qry.row(r).transpose();
      token.tail(hy).setZero();
      g_wblock += dpre * token.transpose();
      g_bblock += dpre;
      g_emb_qry.row(r) = (w_block_.leftCols(hx).transpose() * dpre).transpose();
    }
    for (Eigen::Index r = 0; r < c_rows; ++r) {
      Eigen::VectorXd dpre = (1.0 - cache.h_ctx.row(r).transpose().array().square())
                                 .matrix()
                                 .cwiseProduct(g_hc.row(r).transpose());
      token.head(hx) = cache.emb_ctx.row(r).transpose();
      token.tail(hy) = cache.label_emb.row(r).transpose();
      g_wblock += dpre * token.transpose();
      g_bblock += dpre;
      g_emb_ctx.row(r) = (w_block_.leftCols(hx).transpose() * dpre).transpose();
      g_label.row(r) = (w_block_.rightCols(hy).transpose() * dpre).transpose();
    }

    // y encoder
    for (Eigen::Index r = 0; r < c_rows; ++r) {
      Eigen::VectorXd dpre =
          (1.0 - cache.label_emb.row(r).transpose().array().square())
              .matrix()
              .cwiseProduct(g_label.row(r).transpose());
      double y = static_cast<double>(cache.ctx_y[static_cast<std::size_t>(r)]);
      g_wy += y * dpre;
      g_by += dpre;
    }

    // x encoder: emb_r = mean over cells of position(f) . tanh(x_rf*w_x+b_x)
    auto cell_backward = [&](const Eigen::MatrixXd& x,
                             const std::vector<Eigen::MatrixXd>& cells,
                             const Eigen::MatrixXd& g_emb) {
      const Eigen::Index d = x.cols();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::MatrixXd& cell = cells[static_cast<std::size_t>(r)];
        Eigen::VectorXd g_row = g_emb.row(r).transpose() * inv_d;
        for (Eigen::Index f = 0; f < d; ++f) {
          Eigen::VectorXd dpre =
              (1.0 - cell.row(f).transpose().array().square())
                  .matrix()
                  .cwiseProduct(
                      cache.position.row(f).transpose().cwiseProduct(g_row));
          g_wx += x(r, f) * dpre;
          g_bx += dpre;
        }
      }
    };
    cell_backward(*cache.qry_x, cache.cells_qry, g_emb_qry);
    cell_backward(*cache.ctx_x, cache.cells_ctx, g_emb_ctx);

    std::map<std::string, Eigen::VectorXd> grads;
    grads["x_encoder"] = concat({g_wx, g_bx});
    grads["y_encoder"] = concat({g_wy, g_by});
    Eigen::VectorXd block_flat(group_size("transformer_blocks"));
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < g_wblock.rows(); ++i)
      for (Eigen::Index j = 0; j < g_wblock.cols(); ++j)
        block_flat(pos++) = g_wblock(i, j);
    for (Eigen::Index i = 0; i < g_bblock.size(); ++i)
      block_flat(pos++) = g_bblock(i);
    grads["transformer_blocks"] = std::move(block_flat);
    Eigen::VectorXd dec_flat(group_size("decoder"));
    pos = 0;
    for (Eigen::Index i = 0; i < g_wdec.rows(); ++i)
      for (Eigen::Index j = 0; j < g_wdec.cols(); ++j)
        dec_flat(pos++) = g_wdec(i, j);
    for (Eigen::Index i = 0; i < g_bdec.size(); ++i) dec_flat(pos++) = g_bdec(i);
    grads["decoder"] = std::move(dec_flat);
    return grads;
  }

  static Eigen::VectorXd concat(const std::vector<Eigen::VectorXd>& parts) {
    Eigen::Index total = 0;
    for (const auto& p : parts) total += p.size();
    Eigen::VectorXd out(total);
    Eigen::Index pos = 0;
    for (const auto& p : parts) {
      out.segment(pos, p.size()) = p;
      pos += p.size();
    }
    return out;
  }

  MockTfmConfig config_;
  Eigen::VectorXd w_x_, b_x_, w_y_, b_y_;
  Eigen::MatrixXd w_block_;
  Eigen::VectorXd b_block_;
  Eigen::MatrixXd w_dec_;
  Eigen::VectorXd b_dec_;
};

/// ICL adapter: fit only stores the context, parameters never change.
class MockTfmIclClassifier : public Classifier {
 public:
  explicit MockTfmIclClassifier(const Hyperparameters& hyper) {
    MockTfmConfig config;
    config.x_width = hyper.value("x_width", config.x_width);
    config.y_width = hyper.value("y_width", config.y_width);
    config.block_width = hyper.value("block_width", config.block_width);
    config.seed = hyper.value("seed", config.seed);
    model_ = std::make_unique<MockTfm>(config);
  }

  const std::string& name() const override {
    static const std::string n = "mock_tfm_icl";
    return n;
  }
  ClassifierKind kind() const override { return ClassifierKind::kTfmIcl; }
  std::string backend_version() const override {
    return std::string("mock-tfm/") + kVersion;
  }

  Hyperparameters hyperparameters() const override {
    const auto& c = model_->config();
    return {{"x_width", c.x_width},
            {"y_width", c.y_width},
            {"block_width", c.block_width},
            {"seed", c.seed}};
  }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    context_x_ = train.features;
    context_y_ = train.labels;
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name(), ": predict before fit");
    check_query_width(query.cols(), context_x_.cols());
    Eigen::VectorXd z = model_->positive_logits(context_x_, context_y_, query);
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }

  MockTfm& model() { return *model_; }
  const MockTfm& model() const { return *model_; }
  std::uint64_t parameter_checksum() const {
    return model_->parameter_checksum();
  }

 private:
  std::unique_ptr<MockTfm> model_;
  Eigen::MatrixXd context_x_;
  std::vector<int> context_y_;
  bool fitted_ = false;
};

}  // namespace tfmbench
