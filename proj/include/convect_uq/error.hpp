#pragma once

#include <stdexcept>
#include <string>

namespace convect_uq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GridError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };

class LinearSolverError : public Error {
public:
    LinearSolverError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// Blow-up during time marching.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::string field, long step)
        : Error(what), field_(std::move(field)), step_(step) {}
    const std::string& field() const { return field_; }
    long step() const { return step_; }

private:
    std::string field_;
    long step_;
};

class UnderdeterminedError : public Error { using Error::Error; };

class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double condition)
        : Error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

class UndefinedSensitivityError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };
class TrainingDivergenceError : public Error {
public:
    TrainingDivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};
class EnsembleError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class MissingPrerequisiteError : public Error {
public:
    MissingPrerequisiteError(const std::string& what, std::string path)
        : Error(what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace convect_uq
