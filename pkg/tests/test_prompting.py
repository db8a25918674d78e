import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewbench.errors import PromptError, TransportError
from reviewbench.prompting import (
    INSTRUCTION,
    NEIGHBOR_HEADER,
    PRODUCT_HEADER,
    USER_HEADER,
    GenerationOutput,
    StubGenerationClient,
    generate,
    parse_generation,
    render_prompt,
)
from reviewbench.retrieval import EvidenceBundle, EvidenceEntry, ProductBlock, RetrievalConfig, build_evidence

from test_retrieval import eligible_graph


def entry(edge_id, ts=0, rating=4.0, title="t", body="b", score=None, captions=()):
    return EvidenceEntry(edge_id=edge_id, timestamp=ts, rating=rating, title=title,
                         body=body, score=score, caption_texts=tuple(captions))


def bundle(setting="both", product=True, user=2, neighbor=2, captions=()):
    return EvidenceBundle(
        user_id="u1", item_id="i1", cutoff=10**15, setting=setting, mode="peregrine",
        product_block=ProductBlock("i1", "Nice lamp\nBright and warm", tuple(captions)) if product else None,
        user_block=tuple(entry(k, ts=k, body=f"user review {k}") for k in range(user)) or None,
        neighbor_block=tuple(entry(10 + k, ts=10 + k, body=f"neighbor review {k}") for k in range(neighbor)) or None,
    )


class TestRenderPrompt:
    def test_both_setting_has_all_headers(self):
        text = render_prompt(bundle()).text
        assert PRODUCT_HEADER in text
        assert USER_HEADER in text
        assert NEIGHBOR_HEADER in text
        assert text.endswith(INSTRUCTION)

    def test_user_setting_only_user_header(self, identity_norm, provider):
        g, inst = eligible_graph()
        b = build_evidence(g, inst, "user", RetrievalConfig(), provider, identity_norm)
        text = render_prompt(b).text
        assert USER_HEADER in text
        assert PRODUCT_HEADER not in text
        assert NEIGHBOR_HEADER not in text

    def test_review_line_format(self):
        text = render_prompt(bundle(user=1, neighbor=0, product=False)).text
        assert "Review 1: Rating: 4/5, Title: t, Text: user review 0" in text

    def test_fractional_rating_rendered(self):
        b = bundle(product=False, user=0, neighbor=1)
        b = EvidenceBundle(**{**b.__dict__, "neighbor_block": (entry(1, rating=3.5),)})
        assert "Rating: 3.5/5" in render_prompt(b).text

    def test_no_blocks_is_error(self):
        empty = EvidenceBundle(user_id="u", item_id="i", cutoff=1, setting="product",
                               mode="peregrine")
        with pytest.raises(PromptError):
            render_prompt(empty)

    def test_captions_rendered(self):
        text = render_prompt(bundle(captions=("a catalog photo",))).text
        assert "Image caption: a catalog photo" in text

    def test_token_estimate(self):
        render = render_prompt(bundle())
        assert render.token_estimate == len(render.text.split())

    def test_injective_on_distinct_entries(self):
        rng = random.Random(41)
        seen = {}
        for trial in range(200):
            n_user = rng.randrange(0, 3)
            n_neighbor = rng.randrange(0 if n_user else 1, 3)
            b = EvidenceBundle(
                user_id="u1", item_id="i1", cutoff=10**15, setting="both", mode="peregrine",
                product_block=ProductBlock("i1", f"desc {rng.randrange(10**6)}"),
                user_block=tuple(
                    entry(k, body=f"u{trial}-{k}-{rng.randrange(10**6)}") for k in range(n_user)
                ) or None,
                neighbor_block=tuple(
                    entry(9 + k, body=f"n{trial}-{k}-{rng.randrange(10**6)}") for k in range(n_neighbor)
                ) or None,
            )
            text = render_prompt(b).text
            assert text not in seen, "distinct bundles rendered identical prompts"
            seen[text] = b


class TestParseGeneration:
    def test_happy_path(self):
        got = parse_generation("Rating: 4\nTitle: Great\nReview: Works well.")
        assert (got.rating, got.title, got.body, got.parse_status) == (4.0, "Great", "Works well.", "ok")
        assert not got.clamped

    def test_clamped_rating_still_ok(self):
        got = parse_generation("Rating: 6\nTitle: x\nReview: y")
        assert got.rating == 5.0
        assert got.clamped
        assert got.parse_status == "ok"

    def test_prose_fails(self):
        got = parse_generation("I think this product is lovely and here is why...")
        assert got.parse_status == "failed"
        assert got.rating is None and got.title == "" and got.body == ""

    def test_partial_when_title_missing(self):
        got = parse_generation("Rating: 3\nReview: body text")
        assert got.parse_status == "partial"

    def test_case_insensitive_markers(self):
        got = parse_generation("rating: 2.5\ntitle: meh\nreview: fine")
        assert got.parse_status == "ok"
        assert got.rating == 2.5

    def test_multiline_body_kept(self):
        got = parse_generation("Rating: 5\nTitle: A\nReview: line one\nline two\n\nline three")
        assert got.body == "line one\nline two\n\nline three"

    def test_rating_from_slash_notation(self):
        assert parse_generation("Rating: 4/5\nTitle: t\nReview: b").rating == 4.0

    def test_low_rating_clamped_up(self):
        got = parse_generation("Rating: 0\nTitle: t\nReview: b")
        assert got.rating == 1.0 and got.clamped

    @given(st.text(max_size=400))
    @settings(max_examples=500, deadline=None)
    def test_total_never_raises(self, raw):
        got = parse_generation(raw)
        assert got.parse_status in ("ok", "partial", "failed")
        if got.parse_status == "ok":
            assert got.rating is not None and 1.0 <= got.rating <= 5.0

    @given(
        st.one_of(st.integers(1, 5).map(float), st.sampled_from([1.5, 2.5, 3.5, 4.5])),
        st.text(
            alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="\n\r"),
            min_size=1, max_size=60,
        ).map(str.strip).filter(bool),
        st.text(
            alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r"),
            min_size=1, max_size=300,
        ).map(str.strip).filter(bool),
    )
    @settings(max_examples=300, deadline=None)
    def test_roundtrip_on_canonical_renders(self, rating, title, body):
        raw = f"Rating: {rating}\nTitle: {title}\nReview: {body}"
        got = parse_generation(raw)
        assert got.parse_status == "ok"
        assert got.rating == rating
        assert got.title == title
        assert got.body == body


class TestStubClient:
    def test_echo_top_neighbor_deterministic(self):
        prompt = render_prompt(bundle())
        stub = StubGenerationClient("echo_top_neighbor")
        first = stub.complete(prompt.text)
        second = stub.complete(prompt.text)
        assert first == second == "Rating: 4\nTitle: t\nReview: neighbor review 0"

    def test_echo_falls_back_to_user_history(self):
        prompt = render_prompt(bundle(neighbor=0))
        got = StubGenerationClient("echo_top_neighbor").complete(prompt.text)
        assert got == "Rating: 4\nTitle: t\nReview: user review 0"

    def test_echo_product_only_uses_fixed_text(self):
        prompt = render_prompt(bundle(user=0, neighbor=0))
        got = StubGenerationClient("echo_top_neighbor").complete(prompt.text)
        assert parse_generation(got).parse_status == "ok"

    def test_fixed_text_mode(self):
        stub = StubGenerationClient("fixed_text", fixed_text="Rating: 1\nTitle: a\nReview: b")
        assert stub.complete("anything") == "Rating: 1\nTitle: a\nReview: b"

    def test_scripted_order_preserved(self):
        script = [f"Rating: {k % 5 + 1}\nTitle: t{k}\nReview: r{k}" for k in range(10)]
        stub = StubGenerationClient("scripted", script=script)
        prompts = [render_prompt(bundle(user=1, neighbor=1)) for _ in range(10)]
        outputs = [generate(p, stub) for p in prompts]
        assert [o.raw for o in outputs] == script

    def test_scripted_exhaustion_is_transport_error(self):
        stub = StubGenerationClient("scripted", script=[])
        with pytest.raises(TransportError):
            stub.complete("x")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            StubGenerationClient("mystery")


class TestGenerate:
    def test_latency_recorded(self):
        stub = StubGenerationClient("fixed_text")
        output = generate(render_prompt(bundle()), stub)
        assert isinstance(output, GenerationOutput)
        assert output.latency_ms >= 0.0

    def test_no_gold_characters_in_peregrine_prompt(self, identity_norm, provider):
        g, inst = eligible_graph(n_neighbors=6)
        for setting in ("product", "user", "neighbor", "both"):
            b = build_evidence(g, inst, setting, RetrievalConfig(k=3), provider, identity_norm)
            text = render_prompt(b).text
            assert inst.gold.body not in text
            assert "zebra" not in text  # the gold body's marker token
