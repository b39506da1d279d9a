#include "htmd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "htmd/errors.hpp"

namespace htmd::train {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host order");

std::string config_hash(const model::ModelConfig& cfg) {
    const std::string text = json(cfg).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorClass::data, "cannot open " + tmp.string() + " for writing");
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw Error(ErrorClass::data, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

void append_blob(std::string& blobs, json& manifest, const std::string& name, const std::string& kind,
                 const diff::Array<float>& values) {
    manifest.push_back({{"name", name}, {"shape", values.shape()}, {"offset", blobs.size()}, {"kind", kind}});
    const auto* bytes = reinterpret_cast<const char*>(values.data());
    blobs.append(bytes, values.size() * sizeof(float));
}

struct ParsedFile {
    json header;
    std::string blobs;
};

ParsedFile parse_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::string magic;
    std::getline(in, magic);
    const std::string expected = std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion);
    if (magic.rfind(kCheckpointMagic, 0) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
    if (magic != expected) throw CheckpointError("checkpoint version mismatch: '" + magic + "', expected '" + expected + "'");
    std::string len_line;
    std::getline(in, len_line);
    std::size_t header_len = 0;
    try {
        header_len = std::stoull(len_line);
    } catch (const std::exception&) {
        throw CheckpointError("corrupt checkpoint header length in " + path.string());
    }
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len)))
        throw CheckpointError("truncated checkpoint header in " + path.string());
    ParsedFile parsed;
    try {
        parsed.header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    std::ostringstream rest;
    rest << in.rdbuf();
    parsed.blobs = rest.str();
    return parsed;
}

diff::Array<float> read_blob(const ParsedFile& file, const json& entry) {
    diff::Shape shape;
    std::size_t offset = 0;
    try {
        shape = entry.at("shape").get<diff::Shape>();
        offset = entry.at("offset").get<std::size_t>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt manifest entry: ") + e.what());
    }
    const std::size_t bytes = diff::shape_size(shape) * sizeof(float);
    if (offset > file.blobs.size() || bytes > file.blobs.size() - offset)
        throw CheckpointError("corrupt manifest: '" + entry.value("name", std::string("?")) + "' exceeds the data section");
    diff::Array<float> out(shape);
    std::memcpy(out.data(), file.blobs.data() + offset, bytes);
    return out;
}

void restore_tensors(const ParsedFile& file, model::Separator<float>& model, Adam<float>* optimizer) {
    const json& manifest = file.header.at("tensors");
    std::size_t expected_bytes = 0;
    for (const auto& e : manifest) expected_bytes += diff::shape_size(e.at("shape").get<diff::Shape>()) * sizeof(float);
    if (expected_bytes != file.blobs.size())
        throw CheckpointError("corrupt manifest: " + std::to_string(expected_bytes) + " bytes declared, " +
                              std::to_string(file.blobs.size()) + " present");

    std::size_t k = 0;
    auto& entries = model.parameters().entries();
    for (auto& p : entries) {
        if (k >= manifest.size()) throw CheckpointError("corrupt manifest: missing '" + p.name + "'");
        const json& e = manifest[k++];
        if (e.at("name") != p.name) throw CheckpointError("corrupt manifest: expected '" + p.name + "', found " + e.at("name").dump());
        diff::Array<float> values = read_blob(file, e);
        if (values.shape() != p.tensor.shape())
            throw CheckpointError("shape mismatch for '" + p.name + "': " + diff::shape_str(values.shape()));
        p.tensor.value() = std::move(values);
    }

    const json& opt = file.header.at("optimizer");
    if (!optimizer || opt.is_null()) return;
    optimizer->set_steps(opt.at("steps").get<std::size_t>());
    optimizer->config().learning_rate = opt.at("learning_rate").get<double>();
    optimizer->config().beta1 = opt.at("beta1").get<double>();
    optimizer->config().beta2 = opt.at("beta2").get<double>();
    optimizer->config().epsilon = opt.at("epsilon").get<double>();
    auto& moments = optimizer->moments();
    moments.clear();
    while (k < manifest.size()) {
        const json& em = manifest[k++];
        if (k >= manifest.size()) throw CheckpointError("corrupt manifest: unpaired optimizer moment");
        const json& ev = manifest[k++];
        if (em.at("kind") != "adam_m" || ev.at("kind") != "adam_v" || em.at("name") != ev.at("name"))
            throw CheckpointError("corrupt manifest: malformed optimizer moments");
        moments.push_back({em.at("name").get<std::string>(), read_blob(file, em), read_blob(file, ev)});
    }
}

void restore(const ParsedFile& file, model::Separator<float>& model, Adam<float>* optimizer) {
    try {
        restore_tensors(file, model, optimizer);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt manifest: ") + e.what());
    }
}

}  // namespace

void save_checkpoint(const fs::path& path, const model::Separator<float>& model, const Adam<float>* optimizer,
                     const json& meta) {
    json manifest = json::array();
    std::string blobs;
    for (const auto& p : model.parameters().entries())
        append_blob(blobs, manifest, p.name, p.trainable ? "parameter" : "buffer", p.tensor.value());
    json opt = nullptr;
    if (optimizer) {
        opt = {{"steps", optimizer->steps()},
               {"learning_rate", optimizer->config().learning_rate},
               {"beta1", optimizer->config().beta1},
               {"beta2", optimizer->config().beta2},
               {"epsilon", optimizer->config().epsilon}};
        for (const auto& m : optimizer->moments()) {
            append_blob(blobs, manifest, m.name, "adam_m", m.m);
            append_blob(blobs, manifest, m.name, "adam_v", m.v);
        }
    }
    const json header = {{"format", "htmd-checkpoint"},
                         {"version", kCheckpointVersion},
                         {"config", model.config()},
                         {"config_hash", config_hash(model.config())},
                         {"tensors", manifest},
                         {"optimizer", opt},
                         {"meta", meta}};
    const std::string header_text = header.dump(1);
    std::string out = std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion) + "\n" +
                      std::to_string(header_text.size()) + "\n" + header_text;
    out += blobs;
    write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    ParsedFile file = parse_file(path);
    model::ModelConfig cfg;
    try {
        cfg = file.header.at("config").get<model::ModelConfig>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
    }
    if (file.header.value("config_hash", std::string()) != config_hash(cfg))
        throw CheckpointError("checkpoint config hash mismatch in " + path.string());
    LoadedCheckpoint out;
    Rng rng(0);
    out.model = std::make_unique<model::Separator<float>>(cfg, rng);
    out.has_optimizer = !file.header.value("optimizer", json()).is_null();
    restore(file, *out.model, &out.optimizer);
    out.meta = file.header.value("meta", json::object());
    return out;
}

void load_checkpoint_into(const fs::path& path, model::Separator<float>& model, Adam<float>* optimizer, json* meta) {
    ParsedFile file = parse_file(path);
    const std::string stored = file.header.value("config_hash", std::string());
    const std::string expected = config_hash(model.config());
    if (stored != expected)
        throw CheckpointError("checkpoint config hash " + stored + " does not match model config hash " + expected);
    restore(file, model, optimizer);
    if (meta) *meta = file.header.value("meta", json::object());
}

}  // namespace htmd::train
