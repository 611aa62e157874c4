#include "hift/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace hift {

namespace {

constexpr char kMagic[] = "HIFTCKPT1";

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw ParseError("checkpoint: truncated integer field");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint64_t len = read_u64(is);
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (!is) throw ParseError("checkpoint: truncated string field");
    return s;
}

// Raw bytes at storage precision; the double buffer already holds
// representable values, so the narrow-and-widen path is lossless.
std::vector<unsigned char> raw_bytes(const Tensor& t) {
    std::vector<unsigned char> out;
    out.reserve(t.data_bytes());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double v = t.value_at(i);
        switch (t.dtype()) {
            case DType::f64: {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int b = 0; b < 8; ++b) out.push_back((bits >> (8 * b)) & 0xFF);
                break;
            }
            case DType::f32: {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
                for (int b = 0; b < 4; ++b) out.push_back((bits >> (8 * b)) & 0xFF);
                break;
            }
            case DType::f16: {
                const std::uint16_t bits = f32_to_f16_bits(static_cast<float>(v));
                out.push_back(bits & 0xFF);
                out.push_back((bits >> 8) & 0xFF);
                break;
            }
        }
    }
    return out;
}

std::vector<double> decode_bytes(const std::vector<unsigned char>& raw, DType dt) {
    const std::size_t esize = dtype_size(dt);
    if (raw.size() % esize != 0) throw ParseError("checkpoint: record byte count misaligned");
    std::vector<double> out(raw.size() / esize);
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (dt) {
            case DType::f64: {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b)
                    bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
                out[i] = std::bit_cast<double>(bits);
                break;
            }
            case DType::f32: {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b)
                    bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
                out[i] = static_cast<double>(std::bit_cast<float>(bits));
                break;
            }
            case DType::f16: {
                const std::uint16_t bits = static_cast<std::uint16_t>(
                    raw[i * 2] | (static_cast<std::uint16_t>(raw[i * 2 + 1]) << 8));
                out[i] = static_cast<double>(f16_bits_to_f32(bits));
                break;
            }
        }
    }
    return out;
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
    write_string(os, name);
    write_u64(os, t.rank());
    for (std::size_t e : t.shape()) write_u64(os, e);
    write_string(os, dtype_name(t.dtype()));
    const auto raw = raw_bytes(t);
    write_u64(os, raw.size());
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

struct Record {
    std::string name;
    std::vector<std::size_t> shape;
    DType dtype;
    std::vector<double> values;
};

Record read_record(std::istream& is) {
    Record r;
    r.name = read_string(is);
    const std::uint64_t rank = read_u64(is);
    for (std::uint64_t i = 0; i < rank; ++i) r.shape.push_back(read_u64(is));
    r.dtype = dtype_from_name(read_string(is));
    const std::uint64_t nbytes = read_u64(is);
    std::vector<unsigned char> raw(nbytes);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw ParseError("checkpoint: truncated record payload for " + r.name);
    r.values = decode_bytes(raw, r.dtype);
    return r;
}

void open_container(std::ifstream& is, const std::filesystem::path& path, std::string* header) {
    is.open(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    std::string magic(sizeof(kMagic) - 1, '\0');
    is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    char nl = 0;
    is.get(nl);
    if (!is || magic != kMagic || nl != '\n') {
        throw ParseError("not a checkpoint container: " + path.string());
    }
    if (!std::getline(is, *header)) throw ParseError("checkpoint: missing architecture header");
}

}  // namespace

std::string arch_to_text(const ModelArch& arch) {
    nlohmann::json j;
    j["input"] = arch.input == InputKind::tokens ? "tokens" : "vector";
    j["vocab"] = arch.vocab;
    j["seq_len"] = arch.seq_len;
    j["in_dim"] = arch.in_dim;
    j["width"] = arch.width;
    j["hidden_units"] = arch.hidden_units;
    j["hidden_kind"] = arch.hidden_kind == HiddenKind::dense ? "dense" : "transformer";
    j["ffn_mult"] = arch.ffn_mult;
    j["head"] = arch.head == HeadKind::classifier ? "classifier" : "regressor";
    j["classes"] = arch.classes;
    j["out_dim"] = arch.out_dim;
    j["dtype"] = dtype_name(arch.dtype);
    return j.dump();
}

ModelArch arch_from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("architecture header: ") + e.what());
    }
    ModelArch arch;
    try {
        if (j.contains("input")) {
            arch.input = j["input"] == "vector" ? InputKind::vector : InputKind::tokens;
        }
        if (j.contains("vocab")) arch.vocab = j["vocab"].get<std::size_t>();
        if (j.contains("seq_len")) arch.seq_len = j["seq_len"].get<std::size_t>();
        if (j.contains("in_dim")) arch.in_dim = j["in_dim"].get<std::size_t>();
        if (j.contains("width")) arch.width = j["width"].get<std::size_t>();
        if (j.contains("hidden_units")) arch.hidden_units = j["hidden_units"].get<std::size_t>();
        if (j.contains("hidden_kind")) {
            arch.hidden_kind =
                j["hidden_kind"] == "transformer" ? HiddenKind::transformer : HiddenKind::dense;
        }
        if (j.contains("ffn_mult")) arch.ffn_mult = j["ffn_mult"].get<std::size_t>();
        if (j.contains("head")) {
            arch.head = j["head"] == "regressor" ? HeadKind::regressor : HeadKind::classifier;
        }
        if (j.contains("classes")) arch.classes = j["classes"].get<std::size_t>();
        if (j.contains("out_dim")) arch.out_dim = j["out_dim"].get<std::size_t>();
        if (j.contains("dtype")) arch.dtype = dtype_from_name(j["dtype"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("architecture header: ") + e.what());
    }
    arch.validate();
    return arch;
}

void save_model(const LayeredModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os << kMagic << "\n" << arch_to_text(model.arch()) << "\n";
    std::uint64_t count = 0;
    model.for_each_param([&](const NamedParam&) { ++count; });
    write_u64(os, count);
    model.for_each_param([&](const NamedParam& p) { write_record(os, p.qualified, p.tensor); });
    if (!os) throw IoError("write failed: " + path.string());
}

LayeredModel load_model(const std::filesystem::path& path) {
    std::ifstream is;
    std::string header;
    open_container(is, path, &header);
    const ModelArch arch = arch_from_text(header);
    LayeredModel model = LayeredModel::build(arch, 0);
    const std::uint64_t count = read_u64(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        Record r = read_record(is);
        Tensor t = model.param(r.name);
        if (t.shape() != r.shape || t.dtype() != r.dtype) {
            throw ParseError("checkpoint: record " + r.name + " does not match architecture");
        }
        t.assign(r.values);
    }
    return model;
}

void save_optimizer(const OptimizerState& state, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    nlohmann::json j;
    j["optimizer"] = optim_kind_name(state.kind());
    j["state_dtype"] = dtype_name(state.state_dtype());
    os << kMagic << "\n" << j.dump() << "\n";

    std::uint64_t count = 0;
    state.for_each_slot([&](const std::string&, const StateSlot&) { ++count; });
    std::vector<std::pair<std::string, std::uint64_t>> steps;
    state.for_each_slot([&](const std::string& name, const StateSlot&) {
        if (steps.empty() || steps.back().first != name) {
            steps.emplace_back(name, state.step_count(name));
        }
    });
    write_u64(os, count + steps.size());
    state.for_each_slot([&](const std::string& name, const StateSlot& slot) {
        write_record(os, name + slot.suffix, slot.buffer);
    });
    for (const auto& [name, t] : steps) {
        write_record(os, name + ".steps", Tensor::scalar(static_cast<double>(t), DType::f64));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

void load_optimizer(OptimizerState& state, const LayeredModel& model,
                    const std::filesystem::path& path) {
    std::ifstream is;
    std::string header;
    open_container(is, path, &header);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("optimizer header: ") + e.what());
    }
    if (j["optimizer"] != optim_kind_name(state.kind())) {
        throw ParseError("optimizer checkpoint kind mismatch");
    }
    // Ensure slots exist for every parameter named in the container.
    const std::uint64_t count = read_u64(is);
    std::vector<Record> records;
    records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) records.push_back(read_record(is));

    std::vector<std::string> names;
    for (const Record& r : records) {
        const auto dot = r.name.rfind('.');
        names.push_back(r.name.substr(0, dot));
    }
    state.update_optimizer_parameter(model, ParamSet(names), Residency::host, nullptr);
    for (const Record& r : records) {
        const auto dot = r.name.rfind('.');
        const std::string param = r.name.substr(0, dot);
        const std::string suffix = r.name.substr(dot);
        if (suffix == ".steps") {
            state.set_step_count(param, static_cast<std::uint64_t>(r.values.at(0)));
            continue;
        }
        bool placed = false;
        state.for_each_slot([&](const std::string& name, const StateSlot& slot) {
            if (name == param && slot.suffix == suffix) {
                Tensor buf = slot.buffer;
                buf.assign(r.values);
                placed = true;
            }
        });
        if (!placed) throw ParseError("optimizer checkpoint: unknown slot " + r.name);
    }
}

}  // namespace hift
