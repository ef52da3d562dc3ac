"""
Hierarquia de erros do semitts

Erros de validação herdam de ValidationFailure (também um ValueError; a CLI devolve código 1);
os demais são falhas de execução (código 2).
"""


class SemiTTSError(Exception):
    """Raiz de todos os erros do pacote"""


class ValidationFailure(SemiTTSError, ValueError):
    """Entrada ou configuração inválida, detectada antes de qualquer trabalho"""


class ConfigValidationError(ValidationFailure):
    """Configuração de experimento inválida"""

    def __init__(self, message: str, errors: list = None):
        super().__init__(message)
        self.errors = errors or []


class ContractViolation(ValidationFailure):
    """Pré-condição de uma operação não satisfeita"""


class ShapeError(ContractViolation):
    """Dimensões incompatíveis entre tensores, parâmetros ou espectrogramas"""


class WavFormatError(ValidationFailure):
    """Arquivo WAV fora do formato PCM16 mono"""


class WordVectorParseError(ValidationFailure):
    """Linha malformada em um arquivo de vetores de palavras"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"linha {line_number}: {message}")
        self.line_number = line_number


class OutOfVocabularyError(ValidationFailure):
    """Palavra fora do léxico com fallback de grafemas desativado"""

    def __init__(self, word: str):
        super().__init__(f"Palavra fora do léxico: '{word}'")
        self.word = word


class EmptyBatchError(ValidationFailure):
    """Lote sem nenhum frame real (máscara toda zero) ou manifesto vazio"""


class ConfigMismatchError(ValidationFailure):
    """Checkpoint gerado com uma configuração incompatível"""


class UnsupportedVersionError(ValidationFailure):
    """Versão de formato de checkpoint não suportada"""


class CheckpointIntegrityError(ValidationFailure):
    """Checkpoint truncado ou corrompido (checksum não confere)"""


class GradientError(SemiTTSError):
    """Valor não finito encontrado durante a retropropagação"""

    def __init__(self, primitive: str, message: str):
        super().__init__(f"{primitive}: {message}")
        self.primitive = primitive


class NonDeterministicClosureError(SemiTTSError):
    """A closure do grad_check devolveu valores diferentes para os mesmos parâmetros"""


class PipelineError(SemiTTSError):
    """Falha durante a execução de uma etapa do pipeline"""
