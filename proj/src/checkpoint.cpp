#include "kae/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kae/errors.hpp"

namespace kae {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    if (m.cols() == 1) {
        json arr = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) arr.push_back(m(i, 0));
        return arr;
    }
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty()) throw ArtifactError("checkpoint: " + name + " is not a non-empty array");
    if (!j.front().is_array()) {
        Matrix out(static_cast<Eigen::Index>(j.size()), 1);
        for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
        return out;
    }
    const std::size_t cols = j.front().size();
    Matrix out(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw ArtifactError("checkpoint: ragged matrix " + name);
        for (std::size_t c = 0; c < cols; ++c)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
    return out;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

} // namespace

std::string serialize_checkpoint(const KaeModel& model) {
    json doc;
    doc["format"] = "kae-checkpoint";
    doc["version"] = 1;
    doc["variant"] = std::string(variant_name(model.variant()));
    doc["dims"] = {{"N", model.dims().n}, {"M", model.dims().m}, {"h", model.dims().h}};
    const auto& w = model.weights();
    doc["weights"] = {{"id", w.id}, {"f", w.f}, {"b", w.b}, {"sv", w.sv}, {"c", w.c}};
    doc["wf"] = model.wf();
    doc["wb"] = model.wb();
    doc["train_length"] = model.train_length;
    doc["normalization"] = {{"shift", vector_to_json(model.normalization.shift)},
                            {"scale", vector_to_json(model.normalization.scale)}};
    json params = json::object();
    for (const auto& p : model.parameters()) params[p.name()] = matrix_to_json(p.value());
    doc["parameters"] = std::move(params);
    return doc.dump(1) + "\n";
}

KaeModel deserialize_checkpoint(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ArtifactError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "kae-checkpoint") throw ArtifactError("checkpoint: not a kae checkpoint");
        if (doc.at("version").get<int>() != 1) throw ArtifactError("checkpoint: unsupported version");
        Variant variant;
        try {
            variant = parse_variant(doc.at("variant").get<std::string>());
        } catch (const ConfigError& e) {
            throw ArtifactError(std::string("checkpoint: ") + e.what());
        }
        Dims dims{doc.at("dims").at("N").get<int>(), doc.at("dims").at("M").get<int>(),
                  doc.at("dims").at("h").get<int>()};
        const json& jw = doc.at("weights");
        LossWeights w{jw.at("id").get<double>(), jw.at("f").get<double>(), jw.at("b").get<double>(),
                      jw.at("sv").get<double>(), jw.at("c").get<double>()};

        KaeModel model(variant, dims, w, doc.at("wf").get<std::size_t>(), doc.at("wb").get<std::size_t>(), 0);
        model.train_length = doc.at("train_length").get<std::size_t>();
        const Matrix shift = matrix_from_json(doc.at("normalization").at("shift"), "normalization.shift");
        const Matrix scale = matrix_from_json(doc.at("normalization").at("scale"), "normalization.scale");
        if (shift.rows() != dims.n || scale.rows() != dims.n)
            throw ArtifactError("checkpoint: normalization does not match N");
        model.normalization = {shift.col(0), scale.col(0)};

        const json& jp = doc.at("parameters");
        if (jp.size() != model.parameters().size())
            throw ArtifactError("checkpoint: expected " + std::to_string(model.parameters().size()) +
                                " parameter tensors for variant " + std::string(variant_name(variant)) + ", found " +
                                std::to_string(jp.size()));
        for (auto& p : model.parameters()) {
            if (!jp.contains(p.name())) throw ArtifactError("checkpoint: missing parameter " + p.name());
            Matrix value = matrix_from_json(jp.at(p.name()), p.name());
            if (value.rows() != p.value().rows() || value.cols() != p.value().cols())
                throw ArtifactError("checkpoint: parameter " + p.name() + " has the wrong shape");
            if (!value.allFinite()) throw ArtifactError("checkpoint: parameter " + p.name() + " is not finite");
            p.value() = std::move(value);
            p.zero_grad();
        }
        if (variant == Variant::Isvd) model.refresh_isvd();
        return model;
    } catch (const json::exception& e) {
        throw ArtifactError(std::string("checkpoint: schema error: ") + e.what());
    } catch (const ConfigError& e) {
        throw ArtifactError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const KaeModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << serialize_checkpoint(model);
}

KaeModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize_checkpoint(ss.str());
}

} // namespace kae
