import json

import pytest
from hypothesis import given, strategies as st

from genaug.corpus import (
    Caption,
    EntitySet,
    PromptedCaption,
    RuleBasedTagger,
    build_finetune_records,
    extract_entities,
    load_captions,
    read_finetune_records,
    render_prompt,
    tokenize,
    write_finetune_records,
)
from genaug.errors import ConfigError


def cap(text, image_id="img1", split="train"):
    return Caption(image_id=image_id, text=text, split=split)


class TestLoadCaptions:
    def test_coco_json_preserves_order(self, tmp_path):
        doc = {
            "annotations": [
                {"image_id": 1, "caption": "a dog in the park"},
                {"image_id": 2, "caption": "a cat on a mat"},
            ]
        }
        p = tmp_path / "train_captions.json"
        p.write_text(json.dumps(doc))
        captions = load_captions(p, "coco_json")
        assert [c.text for c in captions] == ["a dog in the park", "a cat on a mat"]
        assert [c.image_id for c in captions] == ["1", "2"]
        assert all(c.split == "train" for c in captions)

    def test_blank_caption_skipped_with_warning(self, tmp_path, caplog):
        doc = {
            "annotations": [
                {"image_id": 1, "caption": "  "},
                {"image_id": 2, "caption": "a cat"},
            ]
        }
        p = tmp_path / "c.json"
        p.write_text(json.dumps(doc))
        with caplog.at_level("WARNING"):
            captions = load_captions(p, "coco_json")
        assert len(captions) == 1
        assert any("skipped 1 blank" in r.message for r in caplog.records)

    def test_five_captions_per_image(self, tmp_path):
        # five independent captions per image, three images
        annotations = [
            {"image_id": img, "caption": f"caption {i} for image {img}"}
            for img in (1, 2, 3)
            for i in range(5)
        ]
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"annotations": annotations}))
        assert len(load_captions(p, "coco_json")) == 15

    def test_tsv(self, tmp_path):
        p = tmp_path / "val.tsv"
        p.write_text("img1\ta dog runs\nimg2\ta cat sleeps\n")
        captions = load_captions(p, "tsv")
        assert len(captions) == 2
        assert captions[0].split == "val"  # inferred from file name

    def test_split_argument_wins(self, tmp_path):
        p = tmp_path / "val.tsv"
        p.write_text("img1\ta dog runs\n")
        assert load_captions(p, "tsv", split="test")[0].split == "test"

    def test_parse_failure_names_offset(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"annotations": [ {"image_id": 1, ]}')
        with pytest.raises(ConfigError, match="byte offset"):
            load_captions(p, "coco_json")

    def test_bad_record_names_index(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"annotations": [{"image_id": 1, "caption": "x"}, {"image_id": 2}]}))
        with pytest.raises(ConfigError, match="record 1"):
            load_captions(p, "coco_json")

    def test_bad_tsv_line_number(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("img1\ta dog\nno-tab-here\n")
        with pytest.raises(ConfigError, match="line 2"):
            load_captions(p, "tsv")

    def test_empty_file_is_empty_list(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("")
        assert load_captions(p, "coco_json") == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_captions(tmp_path / "nope.json", "coco_json")


# Hand-verified noun gold labels for the fallback tagger (the independent
# oracle for entity extraction: expected sets were fixed by hand first).
GOLD_ENTITIES = [
    ("a white bike near the wall", ["bike", "wall"]),
    ("running quickly", []),
    ("a dog chases a dog with a frisbee", ["dog", "frisbee"]),
    ("two dogs are playing in the park", ["dogs", "park"]),
    ("a man takes a photo of a red car", ["man", "photo", "car"]),
    ("the small bird sits on a branch", ["bird", "branch"]),
    ("a group of people standing around a table", ["group", "people", "table"]),
]


class TestExtractEntities:
    @pytest.mark.parametrize("text,expected", GOLD_ENTITIES)
    def test_gold_fixture(self, text, expected):
        assert list(extract_entities(cap(text)).entities) == expected

    def test_dedup_keeps_first_occurrence(self):
        entities = extract_entities(cap("a dog chases a dog with a frisbee"))
        assert list(entities) == ["dog", "frisbee"]

    def test_no_nouns_gives_empty_set(self):
        entities = extract_entities(cap("running quickly"))
        assert len(entities) == 0 and not entities

    def test_case_folding_and_punctuation(self):
        entities = extract_entities(cap("The Dog, the Wall!"))
        assert list(entities) == ["dog", "wall"]

    @given(st.lists(st.sampled_from("dog cat wall runs the a near quickly".split()),
                    min_size=1, max_size=12))
    def test_entities_subset_of_tokens(self, words):
        caption = cap(" ".join(words))
        entities = extract_entities(caption)
        assert set(entities.entities) <= set(tokenize(caption.text))

    def test_custom_tagger(self):
        class AllNouns:
            def tag(self, tokens):
                return ["NOUN"] * len(tokens)

        entities = extract_entities(cap("running quickly"), AllNouns())
        assert list(entities) == ["running", "quickly"]


class TestRenderPrompt:
    def test_three_entities_oxford_comma(self):
        prompt = render_prompt(EntitySet(("dog", "frisbee", "park")))
        assert prompt == "Write an image description with keywords including dog, frisbee, and park:"

    def test_single_entity(self):
        assert render_prompt(["bike"]) == "Write an image description with keywords including bike:"

    def test_two_entities(self):
        prompt = render_prompt(["dog", "frisbee"])
        assert prompt == "Write an image description with keywords including dog and frisbee:"

    def test_empty_is_error(self):
        with pytest.raises(ValueError, match="no entities"):
            render_prompt(EntitySet(()))

    def test_rendering_is_deterministic(self):
        entities = EntitySet(("dog", "frisbee", "park"))
        assert render_prompt(entities) == render_prompt(entities)

    @given(st.lists(st.sampled_from(["dog", "cat", "wall", "bike", "park"]),
                    unique=True, min_size=1, max_size=5))
    def test_distinct_entity_lists_render_distinctly(self, items):
        rendered = render_prompt(items)
        assert rendered.startswith("Write an image description with keywords including ")
        assert rendered.endswith(":")
        for item in items:
            assert item in rendered


class TestBuildFinetuneRecords:
    def test_excludes_captions_without_nouns(self):
        captions = [cap(f"a dog number {i}") for i in range(9)] + [cap("running quickly")]
        records = build_finetune_records(captions)
        assert len(records) == 9

    def test_fig_style_example(self):
        records = build_finetune_records([cap("a white bike near the wall")])
        assert records == [
            PromptedCaption(
                prompt="Write an image description with keywords including bike and wall:",
                target="a white bike near the wall",
            )
        ]

    def test_empty_input(self):
        assert build_finetune_records([]) == []

    def test_targets_byte_equal_and_ordered(self):
        texts = ["a dog in a park", "a cat on a wall", "a bird over a tree"]
        records = build_finetune_records([cap(t) for t in texts])
        assert [r.target for r in records] == texts

    def test_roundtrip_file(self, tmp_path):
        records = build_finetune_records([cap("a dog in a park"), cap("a cat on a wall")])
        path = tmp_path / "records.jsonl"
        write_finetune_records(records, path)
        assert read_finetune_records(path) == records


class TestTypes:
    def test_caption_rejects_blank(self):
        with pytest.raises(ValueError):
            Caption(image_id="x", text="   ")

    def test_caption_rejects_bad_split(self):
        with pytest.raises(ValueError):
            Caption(image_id="x", text="a dog", split="dev")

    def test_entity_set_rejects_duplicates(self):
        with pytest.raises(ValueError):
            EntitySet(("dog", "dog"))

    def test_prompted_caption_requires_template(self):
        with pytest.raises(ValueError):
            PromptedCaption(prompt="not the template", target="x")

    def test_tagger_tags_align(self):
        tokens = tokenize("a white bike near the wall")
        tags = RuleBasedTagger().tag(tokens)
        assert len(tags) == len(tokens)
        assert tags[tokens.index("bike")] == "NOUN"
        assert tags[tokens.index("white")] == "ADJ"
