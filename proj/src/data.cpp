#include "stcap/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stcap/errors.hpp"
#include "stcap/rng.hpp"

namespace stcap {

namespace {

using json = nlohmann::ordered_json;

}  // namespace

std::vector<SpecialToken> cap_special_tokens(std::vector<SpecialToken> tokens, int limit) {
    std::vector<SpecialToken> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (t.source == kSourceFace) out.push_back(t);
    }
    for (auto& t : tokens) {
        if (t.source != kSourceFace) out.push_back(std::move(t));
    }
    if (static_cast<int>(out.size()) > limit) out.resize(static_cast<size_t>(limit));
    return out;
}

std::vector<ObjectRegion> cap_objects(std::vector<ObjectRegion> regions, int limit) {
    if (static_cast<int>(regions.size()) > limit) regions.resize(static_cast<size_t>(limit));
    return regions;
}

namespace {

std::array<double, 4> parse_bbox(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 4) {
        throw SchemaError("field '" + field + "' must be an array of 4 numbers", field);
    }
    std::array<double, 4> b{};
    for (size_t i = 0; i < 4; ++i) {
        if (!j[i].is_number()) {
            throw SchemaError("field '" + field + "' must contain numbers", field);
        }
        b[i] = j[i].get<double>();
    }
    if (!(0.0 <= b[0] && b[0] <= b[2] && b[2] <= 1.0 && 0.0 <= b[1] && b[1] <= b[3] &&
          b[3] <= 1.0)) {
        throw SchemaError("field '" + field + "' violates 0<=x1<=x2<=1, 0<=y1<=y2<=1", field);
    }
    return b;
}

Eigen::VectorXd parse_feat(const json& j, const std::string& field, int& d_fr) {
    if (!j.is_array() || j.empty()) {
        throw SchemaError("field '" + field + "' must be a non-empty array", field);
    }
    if (d_fr < 0) {
        d_fr = static_cast<int>(j.size());
    } else if (static_cast<int>(j.size()) != d_fr) {
        throw SchemaError("field '" + field + "' has " + std::to_string(j.size()) +
                              " values, expected " + std::to_string(d_fr),
                          field);
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw SchemaError("field '" + field + "' must contain numbers", field);
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

void check_known_fields(const json& obj, const std::set<std::string>& known,
                        const std::string& context, bool strict) {
    if (!strict) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.contains(it.key())) {
            throw SchemaError("unknown field '" + context + it.key() + "'", context + it.key());
        }
    }
}

}  // namespace

std::vector<CaptionSample> load_dataset(const std::filesystem::path& path,
                                        const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw Error("dataset file not found: " + path.string());
    std::vector<CaptionSample> samples;
    std::string line;
    int lineno = 0;
    int d_fr = opts.expect_d_fr;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
        try {
            if (!j.is_object()) throw SchemaError("sample must be a JSON object", "");
            check_known_fields(j, {"image_id", "objects", "special_tokens", "references"}, "",
                               opts.strict);
            CaptionSample s;
            if (!j.contains("image_id") || !j["image_id"].is_string()) {
                throw SchemaError("field 'image_id' must be a string", "image_id");
            }
            s.image_id = j["image_id"].get<std::string>();

            if (j.contains("objects")) {
                if (!j["objects"].is_array()) throw SchemaError("field 'objects' must be an array", "objects");
                size_t oi = 0;
                for (const auto& jo : j["objects"]) {
                    const std::string ctx = "objects[" + std::to_string(oi) + "].";
                    if (!jo.is_object()) throw SchemaError("object entry must be an object", ctx);
                    check_known_fields(jo, {"bbox", "feat"}, ctx, opts.strict);
                    if (!jo.contains("bbox")) throw SchemaError("missing field '" + ctx + "bbox'", ctx + "bbox");
                    if (!jo.contains("feat")) throw SchemaError("missing field '" + ctx + "feat'", ctx + "feat");
                    ObjectRegion r;
                    r.bbox = parse_bbox(jo["bbox"], ctx + "bbox");
                    r.visual_feature = parse_feat(jo["feat"], ctx + "feat", d_fr);
                    s.objects.push_back(std::move(r));
                    ++oi;
                }
            }

            if (j.contains("special_tokens")) {
                if (!j["special_tokens"].is_array()) {
                    throw SchemaError("field 'special_tokens' must be an array", "special_tokens");
                }
                size_t ti = 0;
                for (const auto& jt : j["special_tokens"]) {
                    const std::string ctx = "special_tokens[" + std::to_string(ti) + "].";
                    if (!jt.is_object()) throw SchemaError("token entry must be an object", ctx);
                    check_known_fields(jt, {"text", "source", "bbox", "feat"}, ctx, opts.strict);
                    for (const char* f : {"text", "source", "bbox", "feat"}) {
                        if (!jt.contains(f)) throw SchemaError("missing field '" + ctx + f + "'", ctx + f);
                    }
                    SpecialToken t;
                    if (!jt["text"].is_string()) throw SchemaError("field '" + ctx + "text' must be a string", ctx + "text");
                    t.text = jt["text"].get<std::string>();
                    if (normalize_token_text(t.text).empty()) {
                        throw SchemaError("field '" + ctx + "text' is empty after normalization",
                                          ctx + "text");
                    }
                    if (!jt["source"].is_number_integer()) {
                        throw SchemaError("field '" + ctx + "source' must be an integer", ctx + "source");
                    }
                    t.source = jt["source"].get<int>();
                    if (t.source < 0 || t.source >= opts.n_sources) {
                        throw SchemaError("field '" + ctx + "source' out of range [0," +
                                              std::to_string(opts.n_sources) + ")",
                                          ctx + "source");
                    }
                    t.bbox = parse_bbox(jt["bbox"], ctx + "bbox");
                    t.visual_feature = parse_feat(jt["feat"], ctx + "feat", d_fr);
                    s.special_tokens.push_back(std::move(t));
                    ++ti;
                }
            }

            if (!j.contains("references") || !j["references"].is_array()) {
                throw SchemaError("field 'references' must be an array", "references");
            }
            for (const auto& jr : j["references"]) {
                if (!jr.is_string()) throw SchemaError("field 'references' must contain strings", "references");
                s.references.push_back(jr.get<std::string>());
            }
            if (s.references.empty()) throw SchemaError("field 'references' must be non-empty", "references");
            if (s.references.size() > 3) {
                if (opts.strict) throw SchemaError("field 'references' holds more than 3 captions", "references");
                s.references.resize(3);
            }

            s.objects = cap_objects(std::move(s.objects), opts.max_objects);
            s.special_tokens = cap_special_tokens(std::move(s.special_tokens), opts.max_tokens);
            samples.push_back(std::move(s));
        } catch (SchemaError& e) {
            throw SchemaError("dataset line " + std::to_string(lineno) + ": " + e.what(), e.field);
        }
    }
    return samples;
}

void save_dataset(const std::vector<CaptionSample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    for (const auto& s : samples) {
        json j;
        j["image_id"] = s.image_id;
        j["objects"] = json::array();
        for (const auto& o : s.objects) {
            json jo;
            jo["bbox"] = {o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]};
            jo["feat"] = std::vector<double>(o.visual_feature.data(),
                                             o.visual_feature.data() + o.visual_feature.size());
            j["objects"].push_back(std::move(jo));
        }
        j["special_tokens"] = json::array();
        for (const auto& t : s.special_tokens) {
            json jt;
            jt["text"] = t.text;
            jt["source"] = t.source;
            jt["bbox"] = {t.bbox[0], t.bbox[1], t.bbox[2], t.bbox[3]};
            jt["feat"] = std::vector<double>(t.visual_feature.data(),
                                             t.visual_feature.data() + t.visual_feature.size());
            j["special_tokens"].push_back(std::move(jt));
        }
        j["references"] = s.references;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kFirstNames = {
    "alice", "boris",  "carla", "dmitri", "elena",  "farid",  "gloria", "hiro",  "ines",
    "jonas", "kira",   "liam",  "mona",   "nadia",  "oscar",  "priya",  "quentin", "rosa",
    "stefan", "tessa", "umar",  "vera",   "walter", "ximena", "yusuf",  "zora"};

const std::vector<std::string> kLastNames = {
    "adebayo",  "brankovic", "castillo", "drummond", "eriksen",  "fontaine", "gruber",
    "haddad",   "ishikawa",  "jablonski", "kovacs",  "lindqvist", "moreau",  "novak",
    "okafor",   "petrov",    "quispe",   "rahimi",   "sorensen", "takeda",   "ulloa",
    "vasquez",  "watanabe",  "xiang",    "yamada",   "zielinski"};

const std::vector<std::string> kSceneTexts = {
    "vote",        "exit",        "open house",  "sale",        "menu",       "taxi",
    "arrivals",    "tickets",     "welcome",     "caution",     "this week",  "grand prix",
    "live jazz",   "city hall",   "museum",      "north gate",  "platform 9", "free wifi",
    "happy hour",  "no parking",  "main street", "box office",  "security",   "departures",
    "baggage claim", "gate 12",   "town square", "market",      "visitor center", "press room"};

// {} marks the name slot, [] the scene-text slot.
const std::vector<std::string> kTemplates = {
    "{} standing next to a sign that says []",
    "{} speaking at a podium",
    "a photo of {} in front of a banner that reads []",
    "{} holding a poster that says []",
    "{} smiling for the camera",
    "{} near a wall with [] written on it",
};

bool template_has_text(const std::string& tpl) { return tpl.find("[]") != std::string::npos; }

std::string fill_template(const std::string& tpl, const std::string& name,
                          const std::string& text) {
    std::string out = tpl;
    if (auto pos = out.find("{}"); pos != std::string::npos) out.replace(pos, 2, name);
    if (auto pos = out.find("[]"); pos != std::string::npos) out.replace(pos, 2, text);
    return out;
}

std::array<double, 4> random_bbox(Rng& rng, double min_side, double max_side) {
    const double w = rng.uniform(min_side, max_side);
    const double h = rng.uniform(min_side, max_side);
    const double x1 = rng.uniform(0.0, 1.0 - w);
    const double y1 = rng.uniform(0.0, 1.0 - h);
    return {x1, y1, x1 + w, y1 + h};
}

Eigen::VectorXd token_visual(const std::string& text, int source, int d_fr, double sigma,
                             Rng& rng) {
    Eigen::VectorXd v =
        hash_unit_vector("feat:" + std::to_string(source) + ":" + text, d_fr);
    for (int i = 0; i < d_fr; ++i) v[i] += sigma * rng.gaussian();
    return v;
}

}  // namespace

std::vector<std::string> synth_names(int count) {
    const int capacity = static_cast<int>(kFirstNames.size() * kLastNames.size());
    if (count > capacity) {
        throw ConfigError("name lexicon size " + std::to_string(count) + " exceeds capacity " +
                              std::to_string(capacity),
                          "names");
    }
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(count));
    const int f = static_cast<int>(kFirstNames.size());
    for (int i = 0; i < count; ++i) {
        const int fi = i % f;
        const int li = (fi + i / f) % static_cast<int>(kLastNames.size());
        names.push_back(kFirstNames[static_cast<size_t>(fi)] + " " +
                        kLastNames[static_cast<size_t>(li)]);
    }
    return names;
}

std::vector<std::string> synth_texts(int count) {
    if (count > static_cast<int>(kSceneTexts.size())) {
        throw ConfigError("text lexicon size " + std::to_string(count) + " exceeds capacity " +
                              std::to_string(kSceneTexts.size()),
                          "texts");
    }
    return {kSceneTexts.begin(), kSceneTexts.begin() + count};
}

const std::vector<std::string>& synth_templates() { return kTemplates; }

namespace {

struct SynthWorld {
    std::vector<std::string> train_names, holdout_names, texts;
};

CaptionSample make_sample(const SynthConfig& cfg, const SynthWorld& world, int split, int index) {
    static const char* kSplitNames[] = {"train", "test", "zs"};
    Rng rng(derive_seed(cfg.seed, std::string("synth-") + kSplitNames[split], static_cast<uint64_t>(index)));

    const auto& pool = (split == 2) ? world.holdout_names : world.train_names;
    const std::string& name = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
    const int tpl_index = rng.uniform_int(static_cast<int>(kTemplates.size()));
    const std::string& tpl = kTemplates[static_cast<size_t>(tpl_index)];
    const bool wants_text = template_has_text(tpl);
    std::string text;
    if (wants_text) {
        text = world.texts[static_cast<size_t>(rng.uniform_int(static_cast<int>(world.texts.size())))];
    }

    CaptionSample s;
    {
        std::ostringstream id;
        id << "synth-" << kSplitNames[split] << "-" << index;
        s.image_id = id.str();
    }
    s.references.push_back(fill_template(tpl, name, text));

    // Subject tokens are visually prominent; distractors are small.
    std::vector<SpecialToken> faces, ocrs;
    {
        SpecialToken subject;
        subject.text = name;
        subject.source = kSourceFace;
        subject.bbox = random_bbox(rng, 0.25, 0.45);
        subject.visual_feature = token_visual(name, kSourceFace, cfg.d_fr, cfg.noise_sigma, rng);
        faces.push_back(std::move(subject));
    }
    for (int i = 0; i < cfg.distractor_faces && static_cast<int>(pool.size()) > 1; ++i) {
        std::string other;
        do {
            other = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
        } while (other == name);
        SpecialToken t;
        t.text = other;
        t.source = kSourceFace;
        t.bbox = random_bbox(rng, 0.04, 0.12);
        t.visual_feature = token_visual(other, kSourceFace, cfg.d_fr, cfg.noise_sigma, rng);
        faces.push_back(std::move(t));
    }
    if (wants_text) {
        SpecialToken t;
        t.text = text;
        t.source = kSourceOcr;
        t.bbox = random_bbox(rng, 0.20, 0.40);
        t.visual_feature = token_visual(text, kSourceOcr, cfg.d_fr, cfg.noise_sigma, rng);
        ocrs.push_back(std::move(t));
    }
    for (int i = 0; i < cfg.distractor_ocr && static_cast<int>(world.texts.size()) > 1; ++i) {
        std::string other;
        do {
            other = world.texts[static_cast<size_t>(rng.uniform_int(static_cast<int>(world.texts.size())))];
        } while (wants_text && other == text);
        SpecialToken t;
        t.text = other;
        t.source = kSourceOcr;
        t.bbox = random_bbox(rng, 0.04, 0.12);
        t.visual_feature = token_visual(other, kSourceOcr, cfg.d_fr, cfg.noise_sigma, rng);
        ocrs.push_back(std::move(t));
    }
    rng.shuffle(faces);
    rng.shuffle(ocrs);
    s.special_tokens.insert(s.special_tokens.end(), faces.begin(), faces.end());
    s.special_tokens.insert(s.special_tokens.end(), ocrs.begin(), ocrs.end());

    // Object regions: the first one encodes the scene (template) identity,
    // the rest are noise context.
    for (int i = 0; i < cfg.objects_per_sample; ++i) {
        ObjectRegion r;
        if (i == 0) {
            r.visual_feature = hash_unit_vector("scene:" + std::to_string(tpl_index), cfg.d_fr);
            for (int k = 0; k < cfg.d_fr; ++k) r.visual_feature[k] += cfg.noise_sigma * rng.gaussian();
            r.bbox = {0.05, 0.05, 0.95, 0.95};
        } else {
            r.visual_feature.resize(cfg.d_fr);
            for (int k = 0; k < cfg.d_fr; ++k) r.visual_feature[k] = rng.gaussian();
            r.visual_feature.normalize();
            r.bbox = random_bbox(rng, 0.1, 0.4);
        }
        s.objects.push_back(std::move(r));
    }
    return s;
}

}  // namespace

SynthOutput generate_synthetic(const SynthConfig& cfg) {
    if (cfg.train_samples < 0 || cfg.test_samples < 0 || cfg.zeroshot_samples < 0) {
        throw ConfigError("sample counts must be non-negative", "synth_train");
    }
    if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0) {
        throw ConfigError("holdout fraction must be in [0,1)", "holdout");
    }
    if (cfg.name_lexicon < 1) throw ConfigError("name lexicon must be non-empty", "names");
    if (cfg.text_lexicon < 1) throw ConfigError("text lexicon must be non-empty", "texts");
    if (cfg.d_fr < 1) throw ConfigError("d_fr must be positive", "d_fr");
    if (cfg.noise_sigma < 0.0) throw ConfigError("sigma must be non-negative", "sigma");

    const std::vector<std::string> names = synth_names(cfg.name_lexicon);
    SynthWorld world;
    world.texts = synth_texts(cfg.text_lexicon);
    const int n_hold = static_cast<int>(std::llround(cfg.holdout_fraction * cfg.name_lexicon));
    if (cfg.zeroshot_samples > 0 && n_hold < 1) {
        throw ConfigError("zero-shot samples requested but the holdout fraction reserves no names",
                          "holdout");
    }
    if (cfg.name_lexicon - n_hold < 1) {
        throw ConfigError("holdout fraction leaves no training names", "holdout");
    }
    world.train_names.assign(names.begin(), names.end() - n_hold);
    world.holdout_names.assign(names.end() - n_hold, names.end());

    // The two lexicons (split into words) and the template words must be
    // pairwise disjoint, otherwise target matching is ambiguous.
    {
        auto words_of = [](const std::vector<std::string>& items) {
            std::set<std::string> w;
            for (const auto& it : items) {
                std::istringstream ss(it);
                std::string part;
                while (ss >> part) w.insert(part);
            }
            return w;
        };
        std::set<std::string> name_words = words_of(names);
        std::set<std::string> text_words = words_of(world.texts);
        std::set<std::string> tpl_words;
        for (const auto& tpl : kTemplates) {
            std::istringstream ss(fill_template(tpl, "", ""));
            std::string part;
            while (ss >> part) tpl_words.insert(part);
        }
        for (const auto& w : name_words) {
            if (text_words.contains(w) || tpl_words.contains(w)) {
                throw ConfigError("lexicons are not disjoint at word '" + w + "'", "names");
            }
        }
        for (const auto& w : text_words) {
            if (tpl_words.contains(w)) {
                throw ConfigError("lexicons are not disjoint at word '" + w + "'", "texts");
            }
        }
    }

    SynthOutput out;
    for (int i = 0; i < cfg.train_samples; ++i) out.train.push_back(make_sample(cfg, world, 0, i));
    for (int i = 0; i < cfg.test_samples; ++i) out.test.push_back(make_sample(cfg, world, 1, i));
    for (int i = 0; i < cfg.zeroshot_samples; ++i) {
        out.zeroshot.push_back(make_sample(cfg, world, 2, i));
    }
    return out;
}

}  // namespace stcap
