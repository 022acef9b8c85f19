fn main() -> std::process::ExitCode {
    gait3d::cli::main()
}
