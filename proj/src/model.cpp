#include "conceptscope/model.hpp"

#include "conceptscope/error.hpp"
#include "conceptscope/rng.hpp"
#include "conceptscope/textio.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace cscope {

namespace {

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
    }
}

// Row-wise softmax in place, max-subtracted.
void softmax_rows(Matrix& logits) {
    logits.colwise() -= logits.rowwise().maxCoeff();
    logits = logits.array().exp().matrix();
    logits.array().colwise() /= logits.rowwise().sum().array();
}

Matrix hidden_preactivation(const MlpModel& m, const Matrix& samples) {
    Matrix h = samples * m.W1.transpose();
    h.rowwise() += m.b1.transpose();
    return h;
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    // Row-major draw order.
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-a, a);
    return w;
}

} // namespace

void MlpModel::validate() const {
    if (W1.rows() < 1 || W1.cols() < 1) throw ShapeError("W1 must be non-empty");
    require_dim(b1.size(), W1.rows(), "b1");
    if (W2.cols() != W1.rows()) {
        throw ShapeError("W2 has " + std::to_string(W2.cols()) + " columns but the hidden width is " +
                         std::to_string(W1.rows()));
    }
    if (W2.rows() < 1) throw ShapeError("W2 must have at least one row");
    require_dim(b2.size(), W2.rows(), "b2");
    if (!W1.allFinite() || !b1.allFinite() || !W2.allFinite() || !b2.allFinite()) {
        throw DegenerateError("model contains non-finite parameters");
    }
}

Vector features(const MlpModel& m, const Eigen::Ref<const Vector>& x) {
    require_dim(x.size(), m.input_dim(), "input");
    return (m.W1 * x + m.b1).cwiseMax(0.0);
}

Matrix feature_matrix(const MlpModel& m, const Matrix& samples) {
    if (samples.cols() != m.input_dim()) {
        throw ShapeError("samples have " + std::to_string(samples.cols()) + " columns, model expects " +
                         std::to_string(m.input_dim()));
    }
    return hidden_preactivation(m, samples).cwiseMax(0.0);
}

Vector logits(const MlpModel& m, const Eigen::Ref<const Vector>& z) {
    require_dim(z.size(), m.hidden(), "features");
    return m.W2 * z + m.b2;
}

Vector class_probs(const MlpModel& m, const Eigen::Ref<const Vector>& z) {
    Vector l = logits(m, z);
    l.array() -= l.maxCoeff();
    l = l.array().exp().matrix();
    return l / l.sum();
}

Matrix class_prob_matrix(const MlpModel& m, const Matrix& feats) {
    if (feats.cols() != m.hidden()) {
        throw ShapeError("feature rows have " + std::to_string(feats.cols()) + " columns, model has " +
                         std::to_string(m.hidden()) + " hidden units");
    }
    Matrix l = feats * m.W2.transpose();
    l.rowwise() += m.b2.transpose();
    softmax_rows(l);
    return l;
}

Matrix prob_jacobian(const MlpModel& m, const Eigen::Ref<const Vector>& z) {
    const Vector p = class_probs(m, z);
    const Eigen::RowVectorXd mixed = p.transpose() * m.W2; // sum_m p_m W2[m, :]
    Matrix jac = m.W2;
    jac.rowwise() -= mixed;
    return p.asDiagonal() * jac;
}

const Matrix& logit_jacobian(const MlpModel& m) noexcept { return m.W2; }

HalfSpace feature_halfspace(const MlpModel& m, Eigen::Index j) {
    if (j < 0 || j >= m.hidden()) {
        throw ConfigError("feature index " + std::to_string(j) + " out of range [0, " +
                          std::to_string(m.hidden()) + ")");
    }
    return {m.W1.row(j).transpose(), m.b1(j)};
}

double mean_cross_entropy(const MlpModel& m, const Dataset& data) {
    const Matrix p = class_prob_matrix(m, feature_matrix(m, data.samples));
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) loss -= std::log(p(i, data.labels[static_cast<std::size_t>(i)]));
    return loss / static_cast<double>(p.rows());
}

int predict(const MlpModel& m, const Eigen::Ref<const Vector>& x) {
    Eigen::Index best = 0;
    logits(m, features(m, x)).maxCoeff(&best);
    return static_cast<int>(best);
}

double accuracy(const MlpModel& m, const Dataset& data) {
    const Matrix l = feature_matrix(m, data.samples) * m.W2.transpose();
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        Eigen::Index best = 0;
        (l.row(i) + m.b2.transpose()).maxCoeff(&best);
        if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(l.rows());
}

TrainResult train(const Dataset& data, const TrainOptions& options) {
    data.validate();
    if (data.size() == 0) throw ConfigError("cannot train on an empty dataset");
    if (options.hidden < 1) throw ConfigError("hidden width must be at least 1");
    if (options.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate)) {
        throw ConfigError("learning rate must be a positive real");
    }

    const Eigen::Index n = data.size();
    const Eigen::Index d = data.dim();
    const Eigen::Index h = options.hidden;
    const Eigen::Index k = data.num_classes;

    Rng rng = Rng::stream(options.seed, streams::init_weights);
    MlpModel m;
    m.W1 = glorot_uniform(h, d, rng);
    m.b1 = Vector::Zero(h);
    m.W2 = glorot_uniform(k, h, rng);
    m.b2 = Vector::Zero(k);

    Matrix onehot = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;

    const double inv_n = 1.0 / static_cast<double>(n);
    const double lr = options.learning_rate;
    Matrix pre(n, h), z(n, h), p(n, k), dz(n, h), dW1(h, d), dW2(k, h);
    Vector db1(h), db2(k);
    double loss = 0.0;
    for (int epoch = 0; epoch <= options.epochs; ++epoch) {
        pre.noalias() = data.samples * m.W1.transpose();
        pre.rowwise() += m.b1.transpose();
        z = pre.cwiseMax(0.0);
        p.noalias() = z * m.W2.transpose();
        p.rowwise() += m.b2.transpose();
        softmax_rows(p);

        loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) loss -= std::log(p(i, data.labels[static_cast<std::size_t>(i)]));
        loss *= inv_n;
        if (!std::isfinite(loss)) throw TrainingError(epoch, "loss is " + std::to_string(loss));
        if (epoch == options.epochs) break;

        // p becomes dLoss/dlogits.
        p -= onehot;
        p *= inv_n;
        dW2.noalias() = p.transpose() * z;
        db2 = p.colwise().sum().transpose();
        dz.noalias() = p * m.W2;
        dz = (pre.array() > 0.0).select(dz, 0.0);
        dW1.noalias() = dz.transpose() * data.samples;
        db1 = dz.colwise().sum().transpose();

        m.W2 -= lr * dW2;
        m.b2 -= lr * db2;
        m.W1 -= lr * dW1;
        m.b1 -= lr * db1;
        if (!m.W1.allFinite() || !m.W2.allFinite()) throw TrainingError(epoch, "non-finite weights");
    }

    TrainResult result;
    result.final_loss = loss;
    result.accuracy = accuracy(m, data);
    result.epochs = options.epochs;
    result.model = std::move(m);
    return result;
}

namespace {

void write_matrix(std::ostringstream& out, const Matrix& mat, const std::string& pad) {
    out << "[";
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        out << (i ? ",\n" : "\n") << pad << "  [";
        for (Eigen::Index j = 0; j < mat.cols(); ++j) out << (j ? ", " : "") << format_real17(mat(i, j));
        out << "]";
    }
    out << "\n" << pad << "]";
}

void write_vector(std::ostringstream& out, const Vector& v) {
    out << "[";
    for (Eigen::Index j = 0; j < v.size(); ++j) out << (j ? ", " : "") << format_real17(v(j));
    out << "]";
}

Matrix read_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ShapeError(std::string(name) + ": row " + std::to_string(i) + " must have " +
                             std::to_string(cols) + " entries");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vector read_vector(const nlohmann::json& j, Eigen::Index n, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
        throw ShapeError(std::string(name) + ": expected " + std::to_string(n) + " entries");
    }
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

} // namespace

std::string model_to_json(const MlpModel& m, int /*indent*/) {
    m.validate();
    std::ostringstream out;
    out << "{\n";
    out << "  \"format\": \"conceptscope-mlp/1\",\n";
    out << "  \"input_dim\": " << m.input_dim() << ",\n";
    out << "  \"hidden\": " << m.hidden() << ",\n";
    out << "  \"classes\": " << m.num_classes() << ",\n";
    out << "  \"W1\": ";
    write_matrix(out, m.W1, "  ");
    out << ",\n  \"b1\": ";
    write_vector(out, m.b1);
    out << ",\n  \"W2\": ";
    write_matrix(out, m.W2, "  ");
    out << ",\n  \"b2\": ";
    write_vector(out, m.b2);
    out << "\n}\n";
    return out.str();
}

MlpModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model JSON: ") + e.what());
    }
    try {
        const auto d = j.at("input_dim").get<Eigen::Index>();
        const auto h = j.at("hidden").get<Eigen::Index>();
        const auto k = j.at("classes").get<Eigen::Index>();
        MlpModel m;
        m.W1 = read_matrix(j.at("W1"), h, d, "W1");
        m.b1 = read_vector(j.at("b1"), h, "b1");
        m.W2 = read_matrix(j.at("W2"), k, h, "W2");
        m.b2 = read_vector(j.at("b2"), k, "b2");
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model JSON: ") + e.what());
    }
}

void save_model(const MlpModel& m, const std::filesystem::path& path) { write_file(path, model_to_json(m)); }

MlpModel load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(read_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace cscope
