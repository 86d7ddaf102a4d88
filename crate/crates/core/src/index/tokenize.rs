/// Case-folds and splits on anything that is not alphanumeric, dropping
/// tokens shorter than two characters. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn examples() {
        assert_eq!(tokenize("Climate-Adapted Agriculture!"), ["climate", "adapted", "agriculture"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("AI R&D 2026"), ["ai", "2026"]);
        assert_eq!(tokenize("  solar\tgrid\n"), ["solar", "grid"]);
    }
}
