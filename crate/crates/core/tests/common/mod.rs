#![allow(dead_code)]

use contrastive_seq2seq::corpus::RawExample;

/// Eight documents of 3 to 5 sentences, each with a distinct four-word
/// summary. 56 distinct words, so 60 vocabulary entries with reserved ids.
pub fn tiny_corpus() -> Vec<RawExample> {
    let rows: [(&[&str], &str); 8] = [
        (
            &["the red fox runs to the park.", "it eats fish by the lake.", "then it sleeps."],
            "red fox runs fast",
        ),
        (
            &["a small bird sings in the tree.", "it flies over the hill.", "the sun is warm.", "it sings again."],
            "small bird sings again",
        ),
        (
            &["the old man walks home.", "he sees the river.", "he eats fish.", "then he sleeps.", "he is old."],
            "old man walks home",
        ),
        (
            &["my green car stops on the road.", "the road is by the park.", "it is in town."],
            "green car stops fast",
        ),
        (
            &["the tall tree grows near the house.", "a bird sings in it.", "it is old.", "the sun is warm."],
            "tall tree grows slowly",
        ),
        (
            &["a busy bee flies to the park.", "it sees a tree.", "it flies again."],
            "busy bee flies home",
        ),
        (
            &["the cold river runs to the lake.", "fish are in it.", "the hill is near.", "the man walks there."],
            "cold river runs near",
        ),
        (
            &["our new house is in town.", "it has a red door.", "the tree is near.", "we are home there.", "it is warm."],
            "new house has door",
        ),
    ];
    rows.iter()
        .map(|(doc, sum)| RawExample::new(doc.join(" "), *sum).unwrap())
        .collect()
}
