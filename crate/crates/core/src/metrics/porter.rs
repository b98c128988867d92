//! Porter stemmer (Porter, 1980), used by METEOR-lite's stem-match pass.

struct Stemmer {
    b: Vec<u8>,
}

impl Stemmer {
    fn is_consonant(&self, i: usize) -> bool {
        match self.b[i] {
            b'a' | b'e' | b'i' | b'o' | b'u' => false,
            b'y' => i == 0 || !self.is_consonant(i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in b[..j+1].
    fn measure(&self, j: usize) -> usize {
        let mut n = 0;
        let mut i = 0;
        // skip initial consonants
        while i <= j {
            if !self.is_consonant(i) {
                break;
            }
            i += 1;
        }
        loop {
            // in vowel run
            while i <= j {
                if self.is_consonant(i) {
                    break;
                }
                i += 1;
            }
            if i > j {
                return n;
            }
            n += 1;
            // in consonant run
            while i <= j {
                if !self.is_consonant(i) {
                    break;
                }
                i += 1;
            }
            if i > j {
                return n;
            }
        }
    }

    fn has_vowel(&self, j: usize) -> bool {
        (0..=j).any(|i| !self.is_consonant(i))
    }

    fn double_consonant(&self, j: usize) -> bool {
        j >= 1 && self.b[j] == self.b[j - 1] && self.is_consonant(j)
    }

    /// cvc at positions j-2..j, where the final c is not w, x or y.
    fn cvc(&self, j: usize) -> bool {
        if j < 2 || !self.is_consonant(j) || self.is_consonant(j - 1) || !self.is_consonant(j - 2) {
            return false;
        }
        !matches!(self.b[j], b'w' | b'x' | b'y')
    }

    fn ends(&self, s: &str) -> bool {
        self.b.ends_with(s.as_bytes())
    }

    fn stem_end(&self, suffix: &str) -> usize {
        self.b.len() - suffix.len() - 1
    }

    fn replace(&mut self, suffix: &str, with: &str) {
        let at = self.b.len() - suffix.len();
        self.b.truncate(at);
        self.b.extend_from_slice(with.as_bytes());
    }

    /// Replace `suffix` with `with` if the remaining stem has measure > m_min.
    fn replace_m(&mut self, suffix: &str, with: &str, m_min: usize) -> bool {
        if self.ends(suffix) && self.b.len() > suffix.len() {
            let j = self.stem_end(suffix);
            if self.measure(j) > m_min {
                self.replace(suffix, with);
            }
            return true; // suffix matched, stop scanning this step
        }
        false
    }

    fn step1a(&mut self) {
        if self.ends("sses") {
            self.replace("sses", "ss");
        } else if self.ends("ies") {
            self.replace("ies", "i");
        } else if self.ends("s") && self.b.len() >= 2 && self.b[self.b.len() - 2] != b's' {
            self.replace("s", "");
        }
    }

    fn step1b(&mut self) {
        if self.ends("eed") {
            if self.measure(self.stem_end("eed")) > 0 {
                self.replace("eed", "ee");
            }
            return;
        }
        let removed = if self.ends("ed") && self.b.len() > 2 && self.has_vowel(self.stem_end("ed")) {
            self.replace("ed", "");
            true
        } else if self.ends("ing") && self.b.len() > 3 && self.has_vowel(self.stem_end("ing")) {
            self.replace("ing", "");
            true
        } else {
            false
        };
        if removed {
            let j = self.b.len().saturating_sub(1);
            if self.ends("at") || self.ends("bl") || self.ends("iz") {
                self.b.push(b'e');
            } else if self.double_consonant(j) && !matches!(self.b[j], b'l' | b's' | b'z') {
                self.b.pop();
            } else if self.measure(j) == 1 && self.cvc(j) {
                self.b.push(b'e');
            }
        }
    }

    fn step1c(&mut self) {
        if self.ends("y") && self.b.len() > 1 && self.has_vowel(self.stem_end("y")) {
            let n = self.b.len();
            self.b[n - 1] = b'i';
        }
    }

    fn step2(&mut self) {
        for (from, to) in [
            ("ational", "ate"),
            ("tional", "tion"),
            ("enci", "ence"),
            ("anci", "ance"),
            ("izer", "ize"),
            ("abli", "able"),
            ("alli", "al"),
            ("entli", "ent"),
            ("eli", "e"),
            ("ousli", "ous"),
            ("ization", "ize"),
            ("ation", "ate"),
            ("ator", "ate"),
            ("alism", "al"),
            ("iveness", "ive"),
            ("fulness", "ful"),
            ("ousness", "ous"),
            ("aliti", "al"),
            ("iviti", "ive"),
            ("biliti", "ble"),
        ] {
            if self.replace_m(from, to, 0) {
                return;
            }
        }
    }

    fn step3(&mut self) {
        for (from, to) in [
            ("icate", "ic"),
            ("ative", ""),
            ("alize", "al"),
            ("iciti", "ic"),
            ("ical", "ic"),
            ("ful", ""),
            ("ness", ""),
        ] {
            if self.replace_m(from, to, 0) {
                return;
            }
        }
    }

    fn step4(&mut self) {
        for suffix in [
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent",
            "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
        ] {
            if self.ends(suffix) && self.b.len() > suffix.len() {
                let j = self.stem_end(suffix);
                if suffix == "ion" && !matches!(self.b[j], b's' | b't') {
                    return;
                }
                if self.measure(j) > 1 {
                    self.replace(suffix, "");
                }
                return;
            }
        }
    }

    fn step5a(&mut self) {
        if self.ends("e") && self.b.len() > 1 {
            let j = self.stem_end("e");
            let m = self.measure(j);
            if m > 1 || (m == 1 && !self.cvc(j)) {
                self.b.pop();
            }
        }
    }

    fn step5b(&mut self) {
        let j = self.b.len() - 1;
        if self.b[j] == b'l' && self.double_consonant(j) && self.measure(j) > 1 {
            self.b.pop();
        }
    }
}

/// Stems a lowercase word. Words shorter than 3 characters or containing
/// non-ASCII-alphabetic characters are returned unchanged.
pub fn porter_stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut s = Stemmer { b: word.as_bytes().to_vec() };
    s.step1a();
    s.step1b();
    s.step1c();
    s.step2();
    s.step3();
    s.step4();
    s.step5a();
    s.step5b();
    String::from_utf8(s.b).expect("ascii")
}
