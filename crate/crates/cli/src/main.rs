fn main() {
    std::process::exit(pcst::run());
}
