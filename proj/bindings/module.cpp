#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lexinmt/pipeline.hpp"

namespace py = pybind11;
using namespace lexinmt;

namespace {

corpus::GeneratorConfig make_gen_config(int n_lexicons, int n_candidates,
                                        int n_sentences, int len_min,
                                        int len_max, uint64_t seed) {
  corpus::GeneratorConfig g;
  g.n_lexicons = n_lexicons;
  g.n_candidates_per_lexicon = n_candidates;
  g.n_sentences = n_sentences;
  g.len_min = len_min;
  g.len_max = len_max;
  g.seed = seed;
  return g;
}

nnet::ModelConfig make_model_config(int d_model, int n_heads, int n_layers,
                                    int ffn_dim, double dropout,
                                    int max_positions) {
  nnet::ModelConfig m;
  m.d_model = d_model;
  m.n_heads = n_heads;
  m.n_enc_layers = n_layers;
  m.n_dec_layers = n_layers;
  m.ffn_dim = ffn_dim;
  m.dropout = dropout;
  m.max_positions = max_positions;
  m.vocab_size = 1;  // trainers set the real size
  return m;
}

eval::EvalRecord make_record(const std::string& hyp, const std::string& ref,
                             const std::vector<std::string>& constraints) {
  eval::EvalRecord r;
  r.hyp = split_ws(hyp);
  r.ref = split_ws(ref);
  for (const auto& c : constraints) {
    r.constraints.push_back(split_ws(c));
    r.ref_positions.push_back(-1);  // located lazily in the reference
  }
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "constrained-translation toolkit core";

  py::register_exception<Error>(m, "LexinmtError");

  // corpus -------------------------------------------------------------
  py::class_<corpus::ConstraintInstance>(m, "ConstraintInstance")
      .def_readonly("begin", &corpus::ConstraintInstance::begin)
      .def_readonly("end", &corpus::ConstraintInstance::end)
      .def_readonly("lexicon", &corpus::ConstraintInstance::lexicon)
      .def_readonly("candidates", &corpus::ConstraintInstance::candidates)
      .def_property_readonly("gold", [](const corpus::ConstraintInstance& c) {
        return c.gold ? py::cast(*c.gold) : py::none();
      });

  py::class_<corpus::AnnotatedPair>(m, "AnnotatedPair")
      .def_readonly("src", &corpus::AnnotatedPair::src)
      .def_property_readonly("tgt",
                             [](const corpus::AnnotatedPair& p) {
                               return p.tgt ? py::cast(*p.tgt) : py::none();
                             })
      .def_readonly("constraints", &corpus::AnnotatedPair::constraints);

  py::class_<corpus::ConstraintInventory>(m, "ConstraintInventory")
      .def(py::init<>())
      .def("add",
           [](corpus::ConstraintInventory& inv, const std::string& lexicon,
              const std::string& candidate) {
             inv.add(split_ws(lexicon), split_ws(candidate));
           })
      .def("__len__", &corpus::ConstraintInventory::size)
      .def("entries", [](const corpus::ConstraintInventory& inv) {
        py::dict out;
        for (const auto& e : inv.entries()) {
          py::list cands;
          for (const auto& c : e.candidates) cands.append(join_ws(c));
          out[py::str(join_ws(e.lexicon))] = cands;
        }
        return out;
      });

  m.def("load_inventory", &corpus::load_inventory, py::arg("path"));
  m.def(
      "annotate",
      [](const std::string& src, const py::object& tgt,
         const corpus::ConstraintInventory& inv) {
        std::optional<TokenSeq> t;
        if (!tgt.is_none()) t = split_ws(tgt.cast<std::string>());
        return corpus::annotate(split_ws(src), t, inv);
      },
      py::arg("src"), py::arg("tgt"), py::arg("inventory"));
  m.def(
      "generate_synthetic",
      [](int n_lexicons, int n_candidates, int n_sentences, int len_min,
         int len_max, uint64_t seed) {
        corpus::SyntheticCorpus c = corpus::generate_synthetic(make_gen_config(
            n_lexicons, n_candidates, n_sentences, len_min, len_max, seed));
        return py::make_tuple(std::move(c.inventory), std::move(c.pairs));
      },
      py::arg("n_lexicons") = 50, py::arg("n_candidates") = 3,
      py::arg("n_sentences") = 5000, py::arg("len_min") = 6,
      py::arg("len_max") = 12, py::arg("seed") = 1);
  m.def(
      "split",
      [](const std::vector<corpus::AnnotatedPair>& pairs,
         const std::vector<double>& ratios, uint64_t seed) {
        corpus::SplitResult s = corpus::split(pairs, ratios, seed);
        return py::make_tuple(std::move(s.train), std::move(s.valid),
                              std::move(s.test));
      },
      py::arg("pairs"), py::arg("ratios"), py::arg("seed"));
  m.def("read_corpus_jsonl", &corpus::read_corpus_jsonl, py::arg("path"));
  m.def("write_corpus_jsonl", &corpus::write_corpus_jsonl, py::arg("path"),
        py::arg("pairs"));

  // stage 1 --------------------------------------------------------------
  py::class_<disambig::Stage1Model>(m, "Stage1Model")
      .def_static("load", &disambig::Stage1Model::load, py::arg("path"))
      .def(
          "save",
          [](const disambig::Stage1Model& model, const std::string& path) {
            model.save(path, nnet::ojson::object());
          },
          py::arg("path"))
      .def(
          "disambiguate",
          [](const disambig::Stage1Model& model, const std::string& lexicon,
             const std::string& sentence, size_t begin, size_t end,
             const std::vector<std::string>& candidates) {
            std::vector<TokenSeq> cands;
            for (const auto& c : candidates) cands.push_back(split_ws(c));
            disambig::DisambigResult r = disambig::disambiguate(
                model, split_ws(lexicon), split_ws(sentence), begin, end, cands);
            return py::make_tuple(r.chosen, r.scores);
          },
          py::arg("lexicon"), py::arg("sentence"), py::arg("begin"),
          py::arg("end"), py::arg("candidates"));

  m.def(
      "train_stage1",
      [](const std::vector<corpus::AnnotatedPair>& pairs,
         const corpus::ConstraintInventory& inv, int steps, int batch_size,
         int negatives, uint64_t seed, int d_model, int n_heads, int n_layers,
         int ffn_dim, double lr, int64_t warmup) {
        disambig::Stage1TrainConfig cfg;
        cfg.model = make_model_config(d_model, n_heads, n_layers, ffn_dim, 0.0, 512);
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.negatives = negatives;
        cfg.seed = seed;
        cfg.adam = {lr, warmup, 0.9, 0.98, 1e-9};
        disambig::Stage1TrainResult r =
            disambig::train_disambiguator(pairs, inv, cfg);
        return py::make_tuple(std::move(r.model), r.log.loss_per_step);
      },
      py::arg("pairs"), py::arg("inventory"), py::arg("steps") = 200,
      py::arg("batch_size") = 8, py::arg("negatives") = 5, py::arg("seed") = 1,
      py::arg("d_model") = 16, py::arg("n_heads") = 2, py::arg("n_layers") = 1,
      py::arg("ffn_dim") = 32, py::arg("lr") = 3e-3, py::arg("warmup") = 50);

  // stage 2 ---------------------------------------------------------------
  py::class_<vecnmt::NmtModel>(m, "NmtModel")
      .def_static("load", &vecnmt::NmtModel::load, py::arg("path"))
      .def(
          "save",
          [](const vecnmt::NmtModel& model, const std::string& path) {
            model.save(path, nnet::ojson::object());
          },
          py::arg("path"))
      .def_readonly("kind", &vecnmt::NmtModel::kind)
      .def(
          "beam_search",
          [](const vecnmt::NmtModel& model, const std::string& src, int beam,
             double len_alpha) {
            vecnmt::DecodeOptions opts;
            opts.beam_size = beam;
            opts.len_alpha = len_alpha;
            vecnmt::DecodeResult r =
                vecnmt::beam_search(model, split_ws(src), opts);
            return py::make_tuple(join_ws(model.vocab.decode(r.tokens)),
                                  r.cum_logp, r.flags);
          },
          py::arg("src"), py::arg("beam") = 4, py::arg("len_alpha") = 0.6)
      .def(
          "gda_decode",
          [](const vecnmt::NmtModel& model, const std::string& src,
             const std::vector<std::string>& constraints, int beam,
             double len_alpha, const py::object& gate, bool cursor_boosts) {
            vecnmt::DecodeOptions opts;
            opts.beam_size = beam;
            opts.len_alpha = len_alpha;
            opts.cursor_boosts = cursor_boosts;
            if (!gate.is_none()) opts.gate_override = gate.cast<double>();
            std::vector<TokenSeq> cons;
            for (const auto& c : constraints) cons.push_back(split_ws(c));
            vecnmt::DecodeResult r =
                vecnmt::gda_decode(model, split_ws(src), cons, opts);
            return py::make_tuple(join_ws(model.vocab.decode(r.tokens)),
                                  r.cum_logp, r.flags);
          },
          py::arg("src"), py::arg("constraints"), py::arg("beam") = 4,
          py::arg("len_alpha") = 0.6, py::arg("gate") = py::none(),
          py::arg("cursor_boosts") = true);

  m.def(
      "train_nmt",
      [](const std::vector<corpus::AnnotatedPair>& pairs, const std::string& kind,
         double lambda, int window, int steps, int batch_size, uint64_t seed,
         int d_model, int n_heads, int n_layers, int ffn_dim, double lr,
         int64_t warmup) {
        vecnmt::NmtTrainConfig cfg;
        cfg.model = make_model_config(d_model, n_heads, n_layers, ffn_dim, 0.0, 512);
        cfg.kind = kind;
        cfg.lambda = lambda;
        cfg.window = window;
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        cfg.adam = {lr, warmup, 0.9, 0.98, 1e-9};
        std::vector<corpus::AnnotatedPair> train_pairs =
            kind == "template" ? templ::templated_pairs(pairs) : pairs;
        vecnmt::NmtTrainResult r = vecnmt::train_nmt(train_pairs, cfg);
        return py::make_tuple(std::move(r.model), r.loss_per_step);
      },
      py::arg("pairs"), py::arg("kind") = "vec", py::arg("lambda") = 1.0,
      py::arg("window") = 5, py::arg("steps") = 200, py::arg("batch_size") = 8,
      py::arg("seed") = 1, py::arg("d_model") = 16, py::arg("n_heads") = 2,
      py::arg("n_layers") = 1, py::arg("ffn_dim") = 32, py::arg("lr") = 3e-3,
      py::arg("warmup") = 50);

  // templates --------------------------------------------------------------
  py::class_<templ::TemplatePair>(m, "TemplatePair")
      .def_property_readonly("src_t",
                             [](const templ::TemplatePair& t) {
                               return join_ws(t.src_t);
                             })
      .def_property_readonly("tgt_t",
                             [](const templ::TemplatePair& t) {
                               return join_ws(t.tgt_t);
                             })
      .def_readonly("align", &templ::TemplatePair::align)
      .def_property_readonly("payloads", [](const templ::TemplatePair& t) {
        std::vector<std::string> out;
        for (const auto& p : t.payloads) out.push_back(join_ws(p));
        return out;
      });

  m.def("extract_template", &templ::extract_template, py::arg("pair"));
  m.def(
      "fill_template",
      [](const std::string& decoded, const std::vector<std::string>& payloads) {
        std::vector<TokenSeq> pl;
        for (const auto& p : payloads) pl.push_back(split_ws(p));
        templ::FillResult r = templ::fill_template(split_ws(decoded), pl);
        return py::make_tuple(join_ws(r.tokens), r.flags);
      },
      py::arg("decoded"), py::arg("payloads"));

  // metrics ----------------------------------------------------------------
  m.def("make_record", &make_record, py::arg("hyp"), py::arg("ref"),
        py::arg("constraints"));
  py::class_<eval::EvalRecord>(m, "EvalRecord");
  m.def(
      "exact_match",
      [](const std::vector<eval::EvalRecord>& recs) {
        auto v = eval::exact_match(recs);
        return v ? py::cast(*v) : py::none();
      },
      py::arg("records"));
  m.def(
      "csr",
      [](const std::vector<eval::EvalRecord>& recs) {
        auto v = eval::csr(recs);
        return v ? py::cast(*v) : py::none();
      },
      py::arg("records"));
  m.def(
      "window_overlap",
      [](const std::vector<eval::EvalRecord>& recs, int n) {
        auto v = eval::window_overlap(recs, n);
        return v ? py::cast(*v) : py::none();
      },
      py::arg("records"), py::arg("n") = 2);
  m.def(
      "term_ter",
      [](const std::vector<eval::EvalRecord>& recs, double weight) {
        eval::TerOptions opts;
        opts.term_weight = weight;
        return eval::term_ter(recs, opts);
      },
      py::arg("records"), py::arg("term_weight") = 2.0);
  m.def(
      "bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        std::vector<TokenSeq> h, r;
        for (const auto& s : hyps) h.push_back(split_ws(s));
        for (const auto& s : refs) r.push_back(split_ws(s));
        return eval::bleu(h, r);
      },
      py::arg("hyps"), py::arg("refs"));
  m.def(
      "disambig_accuracy",
      [](const std::vector<int>& preds, const std::vector<int>& golds,
         const std::vector<int>& counts) {
        eval::DisambigAccuracy a = eval::disambig_accuracy(preds, golds, counts);
        return py::make_tuple(a.all ? py::cast(*a.all) : py::none(),
                              a.ambiguous ? py::cast(*a.ambiguous) : py::none());
      },
      py::arg("predictions"), py::arg("golds"), py::arg("candidate_counts"));
}
